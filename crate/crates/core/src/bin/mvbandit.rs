use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvbandit::bounds::asymptotic_regret_coefficient;
use mvbandit::env::BanditInstance;
use mvbandit::error::Result;
use mvbandit::harness::{
    run_experiment_with, sweep_config, write_outputs, ExperimentConfig, RunInfo, RunOptions,
};
use mvbandit::policies::PolicyTag;
use mvbandit::selfcheck::run_selfcheck;

#[derive(Parser)]
#[command(name = "mvbandit", version, about = "Mean-variance multi-armed bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the number of runs.
    #[arg(long)]
    runs: Option<u64>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured policy and write regret curves.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Write one JSON line per run to runs.jsonl.
        #[arg(long)]
        dump_runs: bool,
        /// Include each run's final posterior in runs.jsonl.
        #[arg(long)]
        dump_posteriors: bool,
    },
    /// Regret at the horizon across a grid of risk tolerances.
    SweepRho {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Asymptotic log n regret coefficients for a policy on an instance.
    Bounds {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        policy: String,
        /// Override the instance's rho.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Run the built-in invariant suites.
    Selfcheck {
        /// Smaller grids and sample counts.
        #[arg(long)]
        quick: bool,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    for w in config.instance.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig, opts: &RunOptions, command: &str) -> Result<()> {
    let output = run_experiment_with(config, opts)?;
    let info = RunInfo {
        command: command.to_string(),
        threads: output.threads,
        elapsed_secs: output.elapsed_secs,
    };
    let files = write_outputs(
        &output.summaries,
        config,
        &info,
        output.runs.as_deref(),
        &config.output_dir,
    )?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:<24} {:>10} {:>14} {:>12}", "policy", "rho", "mean_regret", "stderr");
    for s in &output.summaries {
        let c = s.at_horizon();
        let _ = writeln!(
            out,
            "{:<24} {:>10.4} {:>14.4} {:>12.4}",
            s.policy, s.rho, c.mean_regret, c.stderr_regret
        );
    }
    for f in files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    eprintln!("{:.1}s on {} threads", output.elapsed_secs, output.threads);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate {
            run,
            dump_runs,
            dump_posteriors,
        } => {
            let config = load(&run)?;
            let opts = RunOptions {
                threads: None,
                keep_runs: dump_runs,
                keep_posteriors: dump_posteriors,
            };
            execute(&config, &opts, "simulate")?;
        }
        Command::SweepRho { run } => {
            let config = sweep_config(&load(&run)?);
            execute(&config, &RunOptions::default(), "sweep-rho")?;
        }
        Command::Bounds {
            instance,
            policy,
            rho,
        } => {
            let mut inst = BanditInstance::from_file(&instance)?;
            if let Some(rho) = rho {
                inst = inst.with_rho(rho)?;
            }
            let tag = PolicyTag::parse(&policy, inst.family())?;
            let report = asymptotic_regret_coefficient(tag, &inst)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            let _ = write!(std::io::stdout(), "{json}\n\n{}", report.to_table());
        }
        Command::Selfcheck { quick } => {
            let report = run_selfcheck(quick);
            let _ = writeln!(std::io::stdout(), "{report}");
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
