//! Experiment orchestration: configuration, seeded parallel replication,
//! checkpointed regret aggregation and output files.
//!
//! Every run is identified by `(policy index, rho index, run index)` and gets
//! two random streams, one for policy draws and one for rewards. Stream ids
//! are a fixed bit packing of that triple plus the role bit, so results do
//! not depend on scheduling. Runs execute on a rayon pool and are reduced in
//! canonical order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{gap_table, BanditInstance, Family, GapTable, InstanceFile};
use crate::error::{Error, Result};
use crate::policies::{step, PolicyConfig, PolicyKind, PolicyState, PolicyTag};
use crate::regret::{RegretAccumulator, RunTrace, Welford};
use crate::rng::RandomStream;

pub const DEFAULT_RUNS: u64 = 100;
pub const DEFAULT_HORIZON: u64 = 30_000;
pub const DEFAULT_CHECKPOINTS: usize = 60;
pub const THREADS_ENV: &str = "MVBANDIT_THREADS";

const POLICY_BITS: u32 = 8;
const RHO_BITS: u32 = 16;
const RUN_BITS: u32 = 39;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamRole {
    Policy = 0,
    Env = 1,
}

/// Packs `(policy, rho index, run, role)` into a ChaCha stream id.
///
/// Layout from the high bit: 8 bits policy, 16 bits rho index, 39 bits run,
/// 1 bit role. Injective within those ranges; [`ExperimentConfig::validate`]
/// enforces them.
pub fn stream_id(policy: usize, rho_index: usize, run: u64, role: StreamRole) -> u64 {
    debug_assert!((policy as u64) < 1 << POLICY_BITS);
    debug_assert!((rho_index as u64) < 1 << RHO_BITS);
    debug_assert!(run < 1 << RUN_BITS);
    ((policy as u64) << (RHO_BITS + RUN_BITS + 1))
        | ((rho_index as u64) << (RUN_BITS + 1))
        | (run << 1)
        | role as u64
}

/// Where the instance comes from in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Path(PathBuf),
    Inline(InstanceFile),
}

/// Experiment configuration as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub instance: InstanceSource,
    pub policies: Vec<PolicyConfig>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}

fn default_runs() -> u64 {
    DEFAULT_RUNS
}

/// A validated, fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(serialize_with = "serialize_instance")]
    pub instance: BanditInstance,
    #[serde(serialize_with = "serialize_policies")]
    pub policies: Vec<PolicyKind>,
    pub horizon: u64,
    pub runs: u64,
    pub base_seed: u64,
    pub checkpoints: Vec<u64>,
    pub rho_grid: Option<Vec<f64>>,
    pub output_dir: PathBuf,
}

fn serialize_instance<S: serde::Serializer>(i: &BanditInstance, s: S) -> std::result::Result<S::Ok, S::Error> {
    i.to_file_repr().serialize(s)
}

fn serialize_policies<S: serde::Serializer>(p: &[PolicyKind], s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Entry<'a> {
        label: String,
        #[serde(flatten)]
        kind: &'a PolicyKind,
    }
    p.iter()
        .map(|kind| Entry { label: kind.label(), kind })
        .collect::<Vec<_>>()
        .serialize(s)
}

impl ExperimentConfig {
    /// A config with default horizon, runs, seed and checkpoint grid.
    pub fn new(instance: BanditInstance, policies: Vec<PolicyKind>) -> Self {
        let checkpoints = default_checkpoints(instance.num_arms() as u64, DEFAULT_HORIZON);
        Self {
            instance,
            policies,
            horizon: DEFAULT_HORIZON,
            runs: DEFAULT_RUNS,
            base_seed: 0,
            checkpoints,
            rho_grid: None,
            output_dir: PathBuf::from("results"),
        }
    }

    /// Sets the horizon and resets checkpoints to the default grid.
    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self.checkpoints = default_checkpoints(self.instance.num_arms() as u64, horizon);
        self
    }

    pub fn with_runs(mut self, runs: u64) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_rho_grid(mut self, grid: Vec<f64>) -> Self {
        self.rho_grid = Some(grid);
        self
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    /// Reads and validates a config file. Relative instance paths are
    /// resolved against the config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ConfigFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_config_file(file, path.parent())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        Self::from_config_file(file, None)
    }

    pub fn from_config_file(file: ConfigFile, base_dir: Option<&Path>) -> Result<Self> {
        let instance = match file.instance {
            InstanceSource::Inline(def) => def.into_instance()?,
            InstanceSource::Path(p) => {
                let p = match base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p,
                };
                BanditInstance::from_file(&p)?
            }
        };
        let family = instance.family();
        let policies = file
            .policies
            .iter()
            .map(|p| p.resolve(family))
            .collect::<Result<Vec<_>>>()?;
        let checkpoints = file
            .checkpoints
            .unwrap_or_else(|| default_checkpoints(instance.num_arms() as u64, file.horizon));
        let config = Self {
            instance,
            policies,
            horizon: file.horizon,
            runs: file.runs,
            base_seed: file.base_seed,
            checkpoints,
            rho_grid: file.rho_grid,
            output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.instance.num_arms() as u64;
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        if self.policies.len() as u64 > 1 << POLICY_BITS {
            return Err(Error::Config(format!(
                "at most {} policies per experiment",
                1u64 << POLICY_BITS
            )));
        }
        for p in &self.policies {
            p.check_family(self.instance.family())?;
        }
        if self.horizon < k {
            return Err(Error::Config(format!(
                "horizon {} is shorter than the number of arms {k}",
                self.horizon
            )));
        }
        if self.runs == 0 || self.runs >= 1 << RUN_BITS {
            return Err(Error::Config(format!("runs must be in [1, 2^39), got {}", self.runs)));
        }
        let Some(&last) = self.checkpoints.last() else {
            return Err(Error::Config("checkpoints must not be empty".into()));
        };
        if last != self.horizon {
            return Err(Error::Config(format!(
                "last checkpoint must equal the horizon {}, got {last}",
                self.horizon
            )));
        }
        if self.checkpoints[0] < 1 || self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "checkpoints must be strictly increasing and >= 1".into(),
            ));
        }
        if let Some(grid) = &self.rho_grid {
            if grid.is_empty() {
                return Err(Error::Config("rho_grid must not be empty".into()));
            }
            if grid.len() as u64 > 1 << RHO_BITS {
                return Err(Error::Config("rho_grid is too long".into()));
            }
            if let Some(bad) = grid.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
                return Err(Error::Config(format!("rho_grid entries must be >= 0, got {bad}")));
            }
        }
        Ok(())
    }

    /// The rho values an experiment iterates over.
    pub fn rho_values(&self) -> Vec<f64> {
        self.rho_grid
            .clone()
            .unwrap_or_else(|| vec![self.instance.rho()])
    }
}

/// About `count` log-spaced integers in `[lo, hi]`, always ending at `hi`.
pub fn default_checkpoints(lo: u64, hi: u64) -> Vec<u64> {
    log_spaced_checkpoints(lo.max(1), hi, DEFAULT_CHECKPOINTS)
}

pub fn log_spaced_checkpoints(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    let lo = lo.clamp(1, hi.max(1));
    if count <= 1 || lo >= hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as u64)
        .map(|v| v.clamp(lo, hi))
        .collect();
    out.dedup();
    if out.last() != Some(&hi) {
        out.push(hi);
    }
    out
}

/// Default rho grid for a sweep: 13 log-spaced points in `[1e-3, 1e3]` for
/// Gaussian instances, `k/9` for `k = 1..8` for Bernoulli ones.
pub fn default_rho_grid(family: Family) -> Vec<f64> {
    match family {
        Family::Gaussian => (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect(),
        Family::Bernoulli => (1..=8).map(|k| k as f64 / 9.0).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointRecord {
    pub checkpoint: u64,
    pub realized_regret: f64,
    pub pseudo_regret: f64,
    pub eq10_upper: f64,
}

/// Everything kept from one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: String,
    pub rho: f64,
    pub run: u64,
    pub policy_stream: u64,
    pub env_stream: u64,
    pub checkpoints: Vec<CheckpointRecord>,
    pub pulls: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_state: Option<PolicyState>,
}

/// Simulates one run and records regret at each checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn simulate_run(
    kind: &PolicyKind,
    instance: &BanditInstance,
    gaps: &GapTable,
    horizon: u64,
    checkpoints: &[u64],
    rng_policy: &mut RandomStream,
    rng_env: &mut RandomStream,
    keep_state: bool,
) -> Result<(Vec<CheckpointRecord>, Vec<u64>, Option<PolicyState>)> {
    let mut state = PolicyState::new(kind, instance)?;
    let mut acc = RegretAccumulator::new(instance.num_arms(), instance.rho());
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    for t in 1..=horizon {
        let (arm, reward) = step(kind, &mut state, instance, rng_policy, rng_env)?;
        acc.push(arm, reward);
        if next.peek() == Some(&&t) {
            next.next();
            let b = acc.breakdown(gaps);
            records.push(CheckpointRecord {
                checkpoint: t,
                realized_regret: b.realized_regret,
                pseudo_regret: b.pseudo_regret(),
                eq10_upper: acc.eq10_upper(gaps),
            });
        }
    }
    let pulls = state.pulls.clone();
    Ok((records, pulls, keep_state.then_some(state)))
}

/// Simulates `horizon` rounds and returns the full trace.
pub fn simulate_trace(
    kind: &PolicyKind,
    instance: &BanditInstance,
    horizon: u64,
    rng_policy: &mut RandomStream,
    rng_env: &mut RandomStream,
) -> Result<RunTrace> {
    let mut state = PolicyState::new(kind, instance)?;
    let mut arms = Vec::with_capacity(horizon as usize);
    let mut rewards = Vec::with_capacity(horizon as usize);
    for _ in 0..horizon {
        let (a, r) = step(kind, &mut state, instance, rng_policy, rng_env)?;
        arms.push(a);
        rewards.push(r);
    }
    RunTrace::new(arms, rewards, instance.num_arms())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub checkpoint: u64,
    pub mean_regret: f64,
    pub stderr_regret: f64,
    pub mean_pseudo_regret: f64,
    pub stderr_pseudo_regret: f64,
    pub mean_eq10_upper: f64,
}

/// Aggregate over runs for one `(policy, rho)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSummary {
    pub policy: String,
    pub tag: PolicyTag,
    pub rho: f64,
    pub runs: u64,
    pub checkpoints: Vec<CheckpointSummary>,
    pub mean_pulls: Vec<f64>,
}

impl RegretSummary {
    /// Statistics at the last checkpoint (the horizon).
    pub fn at_horizon(&self) -> &CheckpointSummary {
        self.checkpoints.last().expect("summaries have at least one checkpoint")
    }
}

/// Streaming reduction of run records for one `(policy, rho)` pair.
#[derive(Debug, Clone)]
struct SummaryBuilder {
    regret: Vec<Welford>,
    pseudo: Vec<Welford>,
    eq10: Vec<Welford>,
    pulls: Vec<Welford>,
}

impl SummaryBuilder {
    fn new(checkpoints: usize, arms: usize) -> Self {
        Self {
            regret: vec![Welford::default(); checkpoints],
            pseudo: vec![Welford::default(); checkpoints],
            eq10: vec![Welford::default(); checkpoints],
            pulls: vec![Welford::default(); arms],
        }
    }

    fn push(&mut self, rec: &RunRecord) {
        for (i, c) in rec.checkpoints.iter().enumerate() {
            self.regret[i].push(c.realized_regret);
            self.pseudo[i].push(c.pseudo_regret);
            self.eq10[i].push(c.eq10_upper);
        }
        for (w, &p) in self.pulls.iter_mut().zip(&rec.pulls) {
            w.push(p as f64);
        }
    }

    fn finish(self, kind: &PolicyKind, rho: f64, checkpoints: &[u64]) -> RegretSummary {
        let runs = self.pulls.first().map_or(0, |w| w.count);
        RegretSummary {
            policy: kind.label(),
            tag: kind.tag,
            rho,
            runs,
            checkpoints: checkpoints
                .iter()
                .enumerate()
                .map(|(i, &c)| CheckpointSummary {
                    checkpoint: c,
                    mean_regret: self.regret[i].mean,
                    stderr_regret: self.regret[i].standard_error(),
                    mean_pseudo_regret: self.pseudo[i].mean,
                    stderr_pseudo_regret: self.pseudo[i].standard_error(),
                    mean_eq10_upper: self.eq10[i].mean,
                })
                .collect(),
            mean_pulls: self.pulls.iter().map(|w| w.mean).collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker count; `None` reads `MVBANDIT_THREADS`, then falls back to rayon's default.
    pub threads: Option<usize>,
    /// Keep per-run records in the output.
    pub keep_runs: bool,
    /// Keep each run's final posterior state (implies `keep_runs`).
    pub keep_posteriors: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summaries: Vec<RegretSummary>,
    pub runs: Option<Vec<RunRecord>>,
    pub threads: usize,
    pub elapsed_secs: f64,
}

fn thread_count(requested: Option<usize>) -> Result<usize> {
    if let Some(n) = requested {
        return Ok(n.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RegretSummary>> {
    Ok(run_experiment_with(config, &RunOptions::default())?.summaries)
}

pub fn run_experiment_with(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    config.validate()?;
    let started = Instant::now();
    let rhos = config.rho_values();
    let instances: Vec<(BanditInstance, GapTable)> = rhos
        .iter()
        .map(|&rho| {
            let inst = config.instance.with_rho(rho)?;
            let gaps = gap_table(&inst);
            Ok((inst, gaps))
        })
        .collect::<Result<_>>()?;

    let descriptors: Vec<(usize, usize, u64)> = (0..config.policies.len())
        .flat_map(|p| (0..rhos.len()).flat_map(move |r| (0..config.runs).map(move |run| (p, r, run))))
        .collect();

    let threads = thread_count(opts.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let keep_state = opts.keep_posteriors;
    let records: Vec<RunRecord> = pool.install(|| {
        descriptors
            .par_iter()
            .map(|&(p, r, run)| {
                let kind = &config.policies[p];
                let (inst, gaps) = &instances[r];
                let ps = stream_id(p, r, run, StreamRole::Policy);
                let es = stream_id(p, r, run, StreamRole::Env);
                let mut rng_policy = RandomStream::new(config.base_seed, ps);
                let mut rng_env = RandomStream::new(config.base_seed, es);
                let (checkpoints, pulls, final_state) = simulate_run(
                    kind,
                    inst,
                    gaps,
                    config.horizon,
                    &config.checkpoints,
                    &mut rng_policy,
                    &mut rng_env,
                    keep_state,
                )?;
                Ok(RunRecord {
                    policy: kind.label(),
                    rho: rhos[r],
                    run,
                    policy_stream: ps,
                    env_stream: es,
                    checkpoints,
                    pulls,
                    final_state,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // Records arrive in descriptor order: policy-major, then rho, then run.
    let k = config.instance.num_arms();
    let mut summaries = Vec::with_capacity(config.policies.len() * rhos.len());
    for (group, chunk) in records.chunks(config.runs as usize).enumerate() {
        let (p, r) = (group / rhos.len(), group % rhos.len());
        let mut builder = SummaryBuilder::new(config.checkpoints.len(), k);
        for rec in chunk {
            builder.push(rec);
        }
        summaries.push(builder.finish(&config.policies[p], rhos[r], &config.checkpoints));
    }

    Ok(ExperimentOutput {
        summaries,
        runs: (opts.keep_runs || opts.keep_posteriors).then_some(records),
        threads,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

/// Regret at the horizon for every `(policy, rho)` on the config's grid
/// (or the default grid for the instance family).
pub fn sweep_rho(config: &ExperimentConfig) -> Result<Vec<RegretSummary>> {
    Ok(sweep_rho_with(config, &RunOptions::default())?.summaries)
}

pub fn sweep_config(config: &ExperimentConfig) -> ExperimentConfig {
    let mut sweep = config.clone();
    if sweep.rho_grid.is_none() {
        sweep.rho_grid = Some(default_rho_grid(config.instance.family()));
    }
    sweep.checkpoints = vec![config.horizon];
    sweep
}

pub fn sweep_rho_with(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    run_experiment_with(&sweep_config(config), opts)
}

pub const SUMMARY_HEADER: &str =
    "policy,rho,checkpoint,mean_regret,stderr_regret,mean_pseudo_regret,mean_eq10_upper";
pub const PULLS_HEADER: &str = "policy,rho,arm,mean_pulls";

/// `summary.csv` contents. Floats use Rust's shortest round-trip formatting.
pub fn summary_csv(summaries: &[RegretSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        for c in &s.checkpoints {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.policy,
                s.rho,
                c.checkpoint,
                c.mean_regret,
                c.stderr_regret,
                c.mean_pseudo_regret,
                c.mean_eq10_upper
            ));
        }
    }
    out
}

pub fn pulls_csv(summaries: &[RegretSummary]) -> String {
    let mut out = String::from(PULLS_HEADER);
    out.push('\n');
    for s in summaries {
        for (arm, m) in s.mean_pulls.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", s.policy, s.rho, arm, m));
        }
    }
    out
}

/// Run metadata recorded in `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub threads: usize,
    pub elapsed_secs: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    started_unix_secs: u64,
    elapsed_secs: f64,
    threads: usize,
    base_seed: u64,
    stream_layout: &'static str,
    config: &'a ExperimentConfig,
    warnings: Vec<String>,
}

/// Writes `summary.csv`, `pulls.csv`, `manifest.json` and, when records are
/// given, `runs.jsonl` into `dir`. Files are staged and renamed into place;
/// on any failure the staged files are removed.
pub fn write_outputs(
    summaries: &[RegretSummary],
    config: &ExperimentConfig,
    info: &RunInfo,
    runs: Option<&[RunRecord]>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        tool: "mvbandit",
        version: env!("CARGO_PKG_VERSION"),
        command: &info.command,
        started_unix_secs: now.saturating_sub(info.elapsed_secs as u64),
        elapsed_secs: info.elapsed_secs,
        threads: info.threads,
        base_seed: config.base_seed,
        stream_layout: "ChaCha8(seed = base_seed, stream = policy<<56 | rho_index<<40 | run<<1 | role), role 0 = policy, 1 = env",
        config,
        warnings: config.instance.warnings(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;

    let mut files: Vec<(&str, String)> = vec![
        ("summary.csv", summary_csv(summaries)),
        ("pulls.csv", pulls_csv(summaries)),
        ("manifest.json", manifest_json + "\n"),
    ];
    if let Some(runs) = runs {
        let mut dump = String::new();
        for r in runs {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Config(format!("run dump serialization: {e}")))?;
            dump.push_str(&line);
            dump.push('\n');
        }
        files.push(("runs.jsonl", dump));
    }

    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        for (name, body) in &files {
            let target = dir.join(name);
            let tmp = dir.join(format!("{name}.partial"));
            staged.push((tmp.clone(), target));
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        for (tmp, target) in &staged {
            fs::rename(tmp, target).map_err(|e| Error::io(target, e))?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    Ok(staged.into_iter().map(|(_, t)| t).collect())
}
