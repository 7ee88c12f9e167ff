use std::fs;
use std::process::Command;

use mvbandit::env::BanditInstance;
use mvbandit::harness::{
    pulls_csv, run_experiment, run_experiment_with, summary_csv, sweep_rho, write_outputs,
    ExperimentConfig, RunInfo, RunOptions, PULLS_HEADER, SUMMARY_HEADER,
};
use mvbandit::policies::{PolicyKind, PolicyTag};

fn small_config() -> ExperimentConfig {
    ExperimentConfig::new(
        BanditInstance::gaussian15(1.0),
        vec![PolicyKind::new(PolicyTag::Mvts), PolicyKind::new(PolicyTag::MvLcbGaussian)],
    )
    .with_horizon(400)
    .with_runs(9)
    .with_seed(11)
}

fn info() -> RunInfo {
    RunInfo { command: "test".into(), threads: 1, elapsed_secs: 0.0 }
}

#[test]
fn streaming_aggregation_matches_two_pass() {
    let cfg = small_config().with_rho_grid(vec![0.01, 3.0]);
    let opts = RunOptions { keep_runs: true, ..Default::default() };
    let out = run_experiment_with(&cfg, &opts).unwrap();
    let runs = out.runs.unwrap();
    assert_eq!(runs.len(), 2 * 2 * 9);
    for s in &out.summaries {
        let mine: Vec<_> = runs.iter().filter(|r| r.policy == s.policy && r.rho == s.rho).collect();
        assert_eq!(mine.len(), 9);
        for (ci, c) in s.checkpoints.iter().enumerate() {
            let xs: Vec<f64> = mine.iter().map(|r| r.checkpoints[ci].realized_regret).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
            assert!(rel(c.mean_regret, mean) <= 1e-9);
            assert!(rel(c.stderr_regret, se) <= 1e-9);
            let pm = mine.iter().map(|r| r.checkpoints[ci].pseudo_regret).sum::<f64>() / n;
            assert!(rel(c.mean_pseudo_regret, pm) <= 1e-9);
        }
        for w in s.checkpoints.windows(2) {
            assert!(w[1].mean_pseudo_regret >= w[0].mean_pseudo_regret);
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small_config();
    let one = run_experiment_with(&cfg, &RunOptions { threads: Some(1), ..Default::default() }).unwrap();
    let many = run_experiment_with(&cfg, &RunOptions { threads: Some(5), ..Default::default() }).unwrap();
    assert_eq!(summary_csv(&one.summaries), summary_csv(&many.summaries));
    assert_eq!(pulls_csv(&one.summaries), pulls_csv(&many.summaries));
}

#[test]
fn round_robin_horizon_pulls_every_arm_once() {
    let cfg = ExperimentConfig::new(
        BanditInstance::gaussian15(1.0),
        vec![PolicyKind::new(PolicyTag::Mts), PolicyKind::new(PolicyTag::Vts)],
    )
    .with_horizon(15)
    .with_runs(3);
    let s = run_experiment(&cfg).unwrap();
    let csv = pulls_csv(&s);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.ends_with(",1")), "{csv}");
}

#[test]
fn single_point_sweep_equals_plain_run() {
    let cfg = small_config();
    let plain = run_experiment(&cfg.clone().with_checkpoints(vec![400])).unwrap();
    let sweep = sweep_rho(&cfg.with_rho_grid(vec![1.0])).unwrap();
    assert_eq!(summary_csv(&plain), summary_csv(&sweep));
}

#[test]
fn output_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let s = run_experiment(&cfg).unwrap();
    let files = write_outputs(&s, &cfg, &info(), None, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with(SUMMARY_HEADER));
    assert_eq!(summary.lines().count(), 1 + 2 * cfg.checkpoints.len());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 11);
    assert_eq!(manifest["config"]["horizon"], 400);
    assert!(manifest["version"].is_string());
    assert!(fs::read_dir(dir.path())
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));

    let again = tempfile::tempdir().unwrap();
    write_outputs(&run_experiment(&cfg).unwrap(), &cfg, &info(), None, again.path()).unwrap();
    assert_eq!(
        fs::read(dir.path().join("summary.csv")).unwrap(),
        fs::read(again.path().join("summary.csv")).unwrap()
    );
}

#[test]
fn empty_summaries_give_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&[], &small_config(), &info(), None, dir.path()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("summary.csv")).unwrap(), format!("{SUMMARY_HEADER}\n"));
    assert_eq!(fs::read_to_string(dir.path().join("pulls.csv")).unwrap(), format!("{PULLS_HEADER}\n"));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(m.is_object());
}

#[test]
fn unwritable_output_reports_path_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = write_outputs(&[], &small_config(), &info(), None, &blocker.join("out")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn run_dump_has_one_line_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let opts = RunOptions { keep_posteriors: true, ..Default::default() };
    let out = run_experiment_with(&cfg, &opts).unwrap();
    write_outputs(&out.summaries, &cfg, &info(), out.runs.as_deref(), dir.path()).unwrap();
    let dump = fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
    assert_eq!(dump.lines().count(), 18);
    let first: serde_json::Value = serde_json::from_str(dump.lines().next().unwrap()).unwrap();
    assert_eq!(first["final_state"]["posteriors"]["kind"], "normal_gamma");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvbandit"))
}

#[test]
fn cli_simulate_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    fs::write(&inst, r#"{"family":"gaussian","mu":[0.5,0.4],"sigma2":[0.1,0.3],"rho":1.0}"#).unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"instance":"inst.json","policies":[{"policy":"mvts"}],"horizon":100,"runs":2}"#).unwrap();
    let out = dir.path().join("out");
    let r = cli()
        .args(["simulate", "--dump-runs", "--runs", "3", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(fs::read_to_string(out.join("runs.jsonl")).unwrap().lines().count(), 3);

    fs::write(&cfg, r#"{"instance":"inst.json","policies":[{"policy":"mvts"}],"horizon":100,"typo":1}"#).unwrap();
    let r = cli().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("typo"));

    fs::write(&cfg, r#"{"instance":"inst.json","policies":[{"policy":"bmvts"}],"horizon":100}"#).unwrap();
    let r = cli().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!r.status.success());
}

#[test]
fn cli_bounds_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    fs::write(&inst, r#"{"family":"gaussian","mu":[0.5,0.4],"sigma2":[0.1,0.3],"rho":0.01}"#).unwrap();
    let r = cli().args(["bounds", "--policy", "mvts", "--instance"]).arg(&inst).output().unwrap();
    assert!(r.status.success());
    let text = String::from_utf8_lossy(&r.stdout);
    let json_end = text.find("\n\n").unwrap();
    let v: serde_json::Value = serde_json::from_str(&text[..json_end]).unwrap();
    assert!((v["total_coefficient"].as_f64().unwrap() - 44.2).abs() < 0.05);

    let r = cli().args(["bounds", "--policy", "mv_lcb", "--instance"]).arg(&inst).output().unwrap();
    assert!(!r.status.success());

    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"instance":"inst.json","policies":[{"policy":"vts"}],"horizon":50,"runs":2,"rho_grid":[0.1,1,10]}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let r = cli().args(["sweep-rho", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
    assert!(rows.lines().skip(1).all(|l| l.split(',').nth(2) == Some("50")));
}

#[test]
fn cli_selfcheck_quick() {
    let r = cli().args(["selfcheck", "--quick"]).output().unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    assert!(!String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}
