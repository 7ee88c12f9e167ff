//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use mvbandit::bounds::{asymptotic_regret_coefficient, gamma_tail_lower, gamma_tail_upper};
use mvbandit::env::{gap_table, BanditInstance};
use mvbandit::harness::{
    log_spaced_checkpoints, run_experiment, run_experiment_with, simulate_trace, stream_id,
    sweep_rho, write_outputs, ExperimentConfig, RegretSummary, RunInfo, RunOptions, StreamRole,
};
use mvbandit::numeric::{erlang_ccdf, gamma_ccdf_quadrature, incomplete_beta_quadrature};
use mvbandit::policies::{PolicyKind, PolicyTag};
use mvbandit::posterior::{beta_cdf_integer, ng_update, NormalGammaState};
use mvbandit::regret::{
    eq10_upper, pseudo_regret, realized_regret, variance_decomposition, RunTrace,
};
use mvbandit::rng::RandomStream;
use rand::Rng;

const HORIZON: u64 = 30_000;
const RUNS: u64 = 100;

struct Outcome {
    passed: bool,
    detail: String,
}

fn gaussian_policies() -> Vec<PolicyKind> {
    [PolicyTag::Mts, PolicyTag::Vts, PolicyTag::Mvts, PolicyTag::MvLcbGaussian]
        .into_iter()
        .map(PolicyKind::new)
        .collect()
}

fn find(s: &[RegretSummary], tag: PolicyTag, rho: f64) -> &RegretSummary {
    s.iter()
        .find(|x| x.tag == tag && x.rho == rho)
        .unwrap_or_else(|| panic!("no summary for {tag:?} at rho {rho}"))
}

/// `(mean_a, mean_b, pooled se)` at the horizon.
fn compare(a: &RegretSummary, b: &RegretSummary) -> (f64, f64, f64) {
    let (ca, cb) = (a.at_horizon(), b.at_horizon());
    let se = (ca.stderr_regret.powi(2) + cb.stderr_regret.powi(2)).sqrt();
    (ca.mean_regret, cb.mean_regret, se)
}

/// `a` below `b` by at least two pooled standard errors.
fn below_by_2se(a: &RegretSummary, b: &RegretSummary, out: &mut Vec<String>) -> bool {
    let (ma, mb, se) = compare(a, b);
    let ok = mb - ma >= 2.0 * se;
    out.push(format!(
        "{}={ma:.1} vs {}={mb:.1} gap={:.2}se{}",
        a.policy,
        b.policy,
        (mb - ma) / se,
        if ok { "" } else { " (needs >= 2)" }
    ));
    ok
}

/// `a <= b + 2 pooled se`.
fn within_2se(a: &RegretSummary, b: &RegretSummary, out: &mut Vec<String>) -> bool {
    let (ma, mb, se) = compare(a, b);
    let ok = ma <= mb + 2.0 * se;
    out.push(format!(
        "{}={ma:.1} <= {}={mb:.1} + 2se ({:.2}se){}",
        a.policy,
        b.policy,
        (ma - mb) / se,
        if ok { "" } else { " violated" }
    ));
    ok
}

fn gaussian_orderings() -> Vec<RegretSummary> {
    let cfg = ExperimentConfig::new(BanditInstance::gaussian15(1.0), gaussian_policies())
        .with_horizon(HORIZON)
        .with_runs(RUNS)
        .with_rho_grid(vec![1e-3, 1.0, 1000.0]);
    run_experiment(&cfg).expect("gaussian experiment")
}

fn a1(s: &[RegretSummary]) -> Outcome {
    let rho = 1e-3;
    let vts = find(s, PolicyTag::Vts, rho);
    let mut d = Vec::new();
    let ok = within_2se(vts, find(s, PolicyTag::Mvts, rho), &mut d)
        & below_by_2se(vts, find(s, PolicyTag::Mts, rho), &mut d)
        & below_by_2se(vts, find(s, PolicyTag::MvLcbGaussian, rho), &mut d);
    Outcome { passed: ok, detail: d.join("; ") }
}

fn a2(s: &[RegretSummary]) -> Outcome {
    let rho = 1000.0;
    let mts = find(s, PolicyTag::Mts, rho);
    let mut d = Vec::new();
    let ok = below_by_2se(mts, find(s, PolicyTag::MvLcbGaussian, rho), &mut d)
        & within_2se(mts, find(s, PolicyTag::Mvts, rho), &mut d);
    Outcome { passed: ok, detail: d.join("; ") }
}

fn a3(s: &[RegretSummary]) -> Outcome {
    let rho = 1.0;
    let lcb = find(s, PolicyTag::MvLcbGaussian, rho);
    let mut d = Vec::new();
    let mut ok = true;
    for tag in [PolicyTag::Mts, PolicyTag::Vts, PolicyTag::Mvts] {
        ok &= below_by_2se(find(s, tag, rho), lcb, &mut d);
    }
    Outcome { passed: ok, detail: d.join("; ") }
}

fn a4() -> Outcome {
    let cfg = ExperimentConfig::new(
        BanditInstance::gaussian15(1.0),
        vec![PolicyKind::new(PolicyTag::Mvts), PolicyKind::new(PolicyTag::MvLcbGaussian)],
    )
    .with_horizon(HORIZON)
    .with_runs(RUNS);
    let s = sweep_rho(&cfg).expect("gaussian sweep");
    let mvts: Vec<_> = s.iter().filter(|x| x.tag == PolicyTag::Mvts).collect();
    let mut failing = Vec::new();
    for m in &mvts {
        let l = find(&s, PolicyTag::MvLcbGaussian, m.rho);
        let (a, b) = (m.at_horizon().mean_regret, l.at_horizon().mean_regret);
        if a >= b {
            failing.push(format!("rho={:.4}: mvts={a:.0} lcb={b:.0}", m.rho));
        }
    }
    Outcome {
        passed: mvts.len() == 13 && failing.is_empty(),
        detail: if failing.is_empty() {
            format!("mvts below mv_lcb at all {} grid points", mvts.len())
        } else {
            format!("{} of {} points fail: {}", failing.len(), mvts.len(), failing.join(", "))
        },
    }
}

fn a5() -> Outcome {
    let rhos = vec![0.111, 0.444, 0.889];
    let cfg = ExperimentConfig::new(
        BanditInstance::bernoulli15(0.444),
        vec![PolicyKind::new(PolicyTag::Bmvts), PolicyKind::new(PolicyTag::MvLcbBernoulli)],
    )
    .with_horizon(HORIZON)
    .with_runs(RUNS)
    .with_rho_grid(rhos.clone());
    let s = run_experiment(&cfg).expect("bernoulli experiment");
    let mut d = Vec::new();
    let mut ok = true;
    for rho in rhos {
        d.push(format!("rho={rho}:"));
        ok &= below_by_2se(find(&s, PolicyTag::Bmvts, rho), find(&s, PolicyTag::MvLcbBernoulli, rho), &mut d);
    }
    Outcome { passed: ok, detail: d.join(" ") }
}

fn a6() -> Outcome {
    let inst = BanditInstance::gaussian(&[0.5, 0.4], &[0.1, 0.3], 0.01).unwrap();
    let coefficient = asymptotic_regret_coefficient(PolicyTag::Mvts, &inst)
        .unwrap()
        .total_coefficient;
    let horizon = 100_000;
    let cfg = ExperimentConfig::new(inst, vec![PolicyKind::new(PolicyTag::Mvts)])
        .with_horizon(horizon)
        .with_runs(200)
        .with_checkpoints(log_spaced_checkpoints(1_000, horizon, 40));
    let s = run_experiment(&cfg).expect("two-arm experiment");
    let pts: Vec<(f64, f64)> = s[0]
        .checkpoints
        .iter()
        .map(|c| ((c.checkpoint as f64).ln(), c.mean_pseudo_regret))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Outcome {
        passed: slope <= coefficient && (coefficient - 44.2).abs() < 0.05,
        detail: format!("slope={slope:.3} coefficient={coefficient:.3} over {} checkpoints", pts.len()),
    }
}

fn a7() -> Outcome {
    let tol = 1e-9;
    let mut worst_lo = f64::INFINITY;
    let mut worst_up = f64::INFINITY;
    let mut cases = 0;
    let mut eq_worst: f64 = 0.0;
    for i in 4..=20 {
        let alpha = i as f64 / 2.0;
        for beta in [0.5, 1.0, 2.0] {
            for k in 1..=20 {
                let x = (alpha / beta) * (1.0 + 0.2 * k as f64);
                let exact = if i % 2 == 0 {
                    erlang_ccdf(i / 2, beta, x)
                } else {
                    gamma_ccdf_quadrature(alpha, beta, x, 1e-12).unwrap()
                };
                let lo = gamma_tail_lower(alpha, beta, x).unwrap();
                let up = gamma_tail_upper(alpha, beta, x).unwrap();
                worst_lo = worst_lo.min(exact - lo);
                worst_up = worst_up.min(up - exact);
                cases += 1;
                if i == 4 {
                    let e2 = erlang_ccdf(2, beta, x);
                    eq_worst = eq_worst.max((lo - e2).abs() / e2);
                }
            }
        }
    }
    Outcome {
        passed: worst_lo >= -tol && worst_up >= -tol && eq_worst <= 1e-12,
        detail: format!(
            "{cases} points, min(ccdf-lower)={worst_lo:.3e}, min(upper-ccdf)={worst_up:.3e}, shape-2 rel err={eq_worst:.3e}"
        ),
    }
}

fn a8() -> Outcome {
    let mut rng = RandomStream::new(8, 0);
    let r = rng.inner_mut();
    let mut exact = true;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = r.random_range(1..=200);
        let center: f64 = r.random_range(-3.0..3.0);
        let scale = 10f64.powf(r.random_range(-2.0..1.0));
        let xs: Vec<f64> = (0..len).map(|_| center + scale * r.random_range(-1.0..1.0)).collect();
        let s = xs.iter().fold(NormalGammaState::prior(), |s, &x| ng_update(&s, x));
        let n = len as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let sq: f64 = xs.iter().map(|x| x * x).sum();
        exact &= s.mu_hat() == mean && s.alpha() == 0.5 + n / 2.0;
        let err = (2.0 * s.beta() - 1.0 - ss).abs() / ss.max(1e-12 * sq);
        worst = worst.max(err);
    }
    let mut beta_worst: f64 = 0.0;
    for a in 1..=20 {
        for b in 1..=20 {
            for j in 1..20 {
                let y = j as f64 / 20.0;
                let d = (beta_cdf_integer(a, b, y).unwrap() - incomplete_beta_quadrature(a, b, y, 1e-13)).abs();
                beta_worst = beta_worst.max(d);
            }
        }
    }
    Outcome {
        passed: exact && worst <= 1e-9 && beta_worst <= 1e-9,
        detail: format!(
            "mean/shape exact={exact}, 2beta-1 rel err={worst:.3e}, beta-binomial max diff={beta_worst:.3e}"
        ),
    }
}

fn a9() -> Outcome {
    let mut rng = RandomStream::new(9, 0);
    let (mut vd, mut split, mut eq10_ok) = (0.0f64, 0.0f64, true);
    for _ in 0..10_000 {
        let r = rng.inner_mut();
        let k = r.random_range(2..=6);
        let len = r.random_range(1..=60);
        let mu: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let s2: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0)).collect();
        let rho = 10f64.powf(r.random_range(-3.0..3.0));
        let inst = BanditInstance::gaussian(&mu, &s2, rho).unwrap();
        let arms: Vec<usize> = (0..len).map(|_| r.random_range(0..k)).collect();
        let rewards: Vec<f64> = arms.iter().map(|&a| mu[a] + r.random_range(-1.5..1.5)).collect();
        let trace = RunTrace::new(arms.clone(), rewards.clone(), k).unwrap();
        let gaps = gap_table(&inst);

        // Two-pass oracle for the total variance.
        let n = len as f64;
        let m = rewards.iter().sum::<f64>() / n;
        let total = rewards.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let d = variance_decomposition(&trace).unwrap();
        let scale = total.max(f64::MIN_POSITIVE);
        vd = vd.max((d.within + d.between - total).abs() / scale).max((d.total - total).abs() / scale);

        let b = realized_regret(&trace, &gaps, rho).unwrap();
        let mag = (b.r1.abs() + b.r2.abs()).max(f64::MIN_POSITIVE);
        split = split.max((b.realized_regret - (b.r1 + b.r2)).abs() / mag);
        let p = pseudo_regret(&trace, &gaps).unwrap();
        let u = eq10_upper(&trace, &gaps).unwrap();
        eq10_ok &= p <= u + 1e-12 * u.abs().max(1.0);
    }

    let cases = [
        (PolicyTag::Mvts, BanditInstance::gaussian(&[0.5, 0.4], &[0.1, 0.3], 1.0).unwrap()),
        (PolicyTag::Vts, BanditInstance::gaussian15(1e-3)),
        (PolicyTag::Bmvts, BanditInstance::bernoulli15(0.444)),
    ];
    let mut lemma = Vec::new();
    let mut lemma_ok = true;
    for (tag, inst) in cases {
        let kind = PolicyKind::new(tag);
        let gaps = gap_table(&inst);
        let runs = 500u64;
        let (mut rs, mut ps) = (Vec::new(), Vec::new());
        for run in 0..runs {
            let mut rp = RandomStream::new(99, stream_id(0, 0, run, StreamRole::Policy));
            let mut re = RandomStream::new(99, stream_id(0, 0, run, StreamRole::Env));
            let t = simulate_trace(&kind, &inst, 1_000, &mut rp, &mut re).unwrap();
            let b = realized_regret(&t, &gaps, inst.rho()).unwrap();
            rs.push(b.realized_regret);
            ps.push(b.pseudo_regret());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let se = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0) / v.len() as f64).sqrt()
        };
        let slack = 3.0 * inst.variances().iter().sum::<f64>();
        let pooled = (se(&rs).powi(2) + se(&ps).powi(2)).sqrt();
        let margin = mean(&ps) + slack + 3.0 * pooled - mean(&rs);
        lemma_ok &= margin >= 0.0;
        lemma.push(format!("{}:{margin:.2}", tag.name()));
    }
    Outcome {
        passed: vd <= 1e-9 && split <= 1e-9 && eq10_ok && lemma_ok,
        detail: format!(
            "decomposition rel err={vd:.3e}, realized-(r1+r2) rel err={split:.3e}, pseudo<=eq10={eq10_ok}, Lemma margins [{}]",
            lemma.join(", ")
        ),
    }
}

fn a10() -> Outcome {
    let cfg = ExperimentConfig::new(BanditInstance::gaussian15(1.0), gaussian_policies())
        .with_horizon(3_000)
        .with_runs(12)
        .with_seed(2024)
        .with_rho_grid(vec![1e-3, 1.0]);
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [1usize, 4, 4, 3].into_iter().enumerate() {
        let opts = RunOptions { threads: Some(threads), ..Default::default() };
        let out = run_experiment_with(&cfg, &opts).unwrap();
        let info = RunInfo { command: "acceptance".into(), threads, elapsed_secs: out.elapsed_secs };
        let path = dir.path().join(format!("lib{i}"));
        write_outputs(&out.summaries, &cfg, &info, None, &path).unwrap();
        outputs.push(fs::read(path.join("summary.csv")).unwrap());
    }

    // The CLI, through the config file and the thread cap variable.
    let config_path = dir.path().join("config.json");
    fs::write(
        &config_path,
        r#"{"instance": {"family": "bernoulli", "p": [0.2, 0.5, 0.7], "rho": 0.5},
            "policies": [{"policy": "bmvts"}, {"policy": "mv_lcb"}],
            "horizon": 2000, "runs": 10, "base_seed": 5}"#,
    )
    .unwrap();
    let mut cli = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("cli{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mvbandit"))
            .args(["simulate", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out_dir)
            .env("MVBANDIT_THREADS", threads)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        cli.push(fs::read(out_dir.join("summary.csv")).unwrap());
    }
    let lib_same = outputs.windows(2).all(|w| w[0] == w[1]);
    let cli_same = cli[0] == cli[1];
    Outcome {
        passed: lib_same && cli_same && !outputs[0].is_empty(),
        detail: format!(
            "library runs at 1/4/4/3 threads identical={lib_same} ({} bytes), CLI at 1/4 threads identical={cli_same}",
            outputs[0].len()
        ),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let started = Instant::now();
        let o = f();
        println!(
            "{name} {} ({:.1}s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    };
    let started = Instant::now();
    let orderings = gaussian_orderings();
    println!("gaussian orderings experiment: {:.1}s", started.elapsed().as_secs_f64());
    report("A1", &|| a1(&orderings));
    report("A2", &|| a2(&orderings));
    report("A3", &|| a3(&orderings));
    report("A4", &a4);
    report("A5", &a5);
    report("A6", &a6);
    report("A7", &a7);
    report("A8", &a8);
    report("A9", &a9);
    report("A10", &a10);
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
