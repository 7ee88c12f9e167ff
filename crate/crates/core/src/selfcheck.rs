//! Invariant suites run by `mvbandit selfcheck`: posterior identities, the
//! Gamma tail sandwich, the shape of `h`, regret identities and the Monte
//! Carlo gap between realized and pseudo-regret.

use std::fmt;
use std::time::Instant;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::bounds::{gamma_tail_lower, gamma_tail_upper_with, h};
use crate::env::{gap_table, BanditInstance};
use crate::error::Result;
use crate::harness::{simulate_trace, stream_id, StreamRole};
use crate::numeric::{erlang_ccdf, gamma_ccdf_quadrature, incomplete_beta_quadrature};
use crate::policies::{PolicyKind, PolicyTag};
use crate::posterior::{beta_cdf_integer, ng_update, NormalGammaState};
use crate::regret::{eq10_upper, realized_regret, variance_decomposition, RunTrace, Welford};
use crate::rng::RandomStream;

/// Absolute slack allowed against the numerical oracles.
pub const ORACLE_TOL: f64 = 1e-9;
/// Relative tolerance for floating-point identities.
pub const IDENTITY_RTOL: f64 = 1e-9;

const SELFCHECK_SEED: u64 = 0x5e1f_c4ec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Smallest slack seen; negative means violated.
    pub margin: f64,
    pub cases: u64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<28} cases={:<6} margin={:+.3e}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.margin,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckResult>,
    pub elapsed_secs: f64,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelfCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} checks, {} failed, {:.2}s",
            self.checks.len(),
            failed,
            self.elapsed_secs
        )
    }
}

/// `|a - b|` scaled by the larger magnitude (and `floor`).
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(floor)
}

/// `(alpha, beta, x)` points for the tail sandwich.
#[derive(Debug, Clone)]
pub struct TailGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `x = (alpha / beta) (1 + step k)` for `k = 1..=points`.
    pub points: u32,
    pub step: f64,
}

impl TailGrid {
    /// alpha in {2, 2.5, ..., 10}, beta in {0.5, 1, 2}, 20 points above the mean.
    pub fn full() -> Self {
        Self {
            alphas: (4..=20).map(|i| i as f64 / 2.0).collect(),
            betas: vec![0.5, 1.0, 2.0],
            points: 20,
            step: 0.2,
        }
    }

    pub fn quick() -> Self {
        Self {
            alphas: vec![2.0, 2.5, 3.0, 4.5, 7.0, 10.0],
            betas: vec![0.5, 2.0],
            points: 10,
            step: 0.4,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.alphas.iter().flat_map(move |&a| {
            self.betas.iter().flat_map(move |&b| {
                (1..=self.points).map(move |k| (a, b, (a / b) * (1.0 + self.step * k as f64)))
            })
        })
    }
}

/// Exact `P(X >= x)` for the sandwich: Erlang closed form for integer shape,
/// quadrature otherwise.
pub fn oracle_gamma_ccdf(alpha: f64, beta: f64, x: f64) -> f64 {
    if alpha.fract() == 0.0 {
        erlang_ccdf(alpha as u32, beta, x)
    } else {
        gamma_ccdf_quadrature(alpha, beta, x, ORACLE_TOL * 1e-3)
            .expect("sandwich grid uses half-integer shapes")
    }
}

/// `lower <= ccdf <= upper <= 1` on every grid point, up to [`ORACLE_TOL`].
/// The rate function is injectable so corrupted versions can be shown to fail.
pub fn check_tail_sandwich<H>(rate_fn: H, grid: &TailGrid) -> CheckResult
where
    H: Fn(f64) -> Result<f64>,
{
    let mut margin = f64::INFINITY;
    let mut cases = 0;
    let mut worst = String::new();
    let mut error = None;
    for (a, b, x) in grid.iter() {
        cases += 1;
        let (lo, up) = match (gamma_tail_lower(a, b, x), gamma_tail_upper_with(&rate_fn, a, b, x)) {
            (Ok(lo), Ok(up)) => (lo, up),
            (Err(e), _) | (_, Err(e)) => {
                error.get_or_insert_with(|| format!("alpha={a} beta={b} x={x}: {e}"));
                continue;
            }
        };
        let exact = oracle_gamma_ccdf(a, b, x);
        let m = (exact - lo).min(up - exact).min(1.0 - up);
        if m < margin {
            margin = m;
            worst = format!("worst at alpha={a} beta={b} x={x}: {lo:.3e} <= {exact:.3e} <= {up:.3e}");
        }
    }
    CheckResult {
        name: "gamma tail sandwich".into(),
        passed: error.is_none() && margin >= -ORACLE_TOL,
        margin,
        cases,
        detail: error.unwrap_or(worst),
    }
}

/// At shape 2 the lower bound is the Erlang-2 tail itself.
pub fn check_lower_bound_shape_two(grid: &TailGrid) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &b in &grid.betas {
        for k in 1..=grid.points {
            let x = (2.0 / b) * (1.0 + grid.step * k as f64);
            let lo = gamma_tail_lower(2.0, b, x).unwrap_or(f64::NAN);
            let exact = (-b * x).exp() * (1.0 + b * x);
            let err = relative_error(lo, exact, f64::MIN_POSITIVE);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
            cases += 1;
        }
    }
    CheckResult {
        name: "lower bound at shape 2".into(),
        passed: worst <= 1e-12,
        margin: 1e-12 - worst,
        cases,
        detail: format!("max relative error {worst:.3e}"),
    }
}

/// `h(1) = 0`, `h > 0` elsewhere, and midpoint convexity on a log grid.
pub fn check_h_shape<H>(rate_fn: H) -> CheckResult
where
    H: Fn(f64) -> Result<f64>,
{
    let xs: Vec<f64> = (-60..=60).map(|i| 10f64.powf(i as f64 / 20.0)).collect();
    let mut margin = f64::INFINITY;
    let mut cases = 0;
    let at_one = rate_fn(1.0).unwrap_or(f64::NAN);
    let mut ok = at_one == 0.0;
    for &x in xs.iter().filter(|&&x| x != 1.0) {
        let v = rate_fn(x).unwrap_or(f64::NAN);
        ok &= v > 0.0;
        margin = margin.min(v);
        cases += 1;
    }
    for w in xs.windows(2).step_by(3) {
        for &v in &xs[..xs.len().min(40)] {
            let (a, b) = (w[0], v);
            let mid = rate_fn(0.5 * (a + b)).unwrap_or(f64::NAN);
            let chord = 0.5 * (rate_fn(a).unwrap_or(f64::NAN) + rate_fn(b).unwrap_or(f64::NAN));
            let slack = chord - mid;
            let tol = 1e-12 * chord.abs().max(1.0);
            ok &= slack >= -tol;
            margin = margin.min(slack + tol);
            cases += 1;
        }
    }
    CheckResult {
        name: "h convex, zero only at 1".into(),
        passed: ok,
        margin,
        cases,
        detail: format!("h(1) = {at_one}"),
    }
}

fn random_sample<R: RngCore>(rng: &mut R, max_len: usize) -> Vec<f64> {
    let len = rng.random_range(1..=max_len);
    let center = rng.random_range(-5.0..5.0);
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    (0..len)
        .map(|_| center + scale * rng.random_range(-1.0..1.0))
        .collect()
}

/// Sequential Normal-Gamma updates against the batch formulas.
pub fn check_posterior_identities(vectors: usize, max_len: usize, seed: u64) -> CheckResult {
    let mut rng = RandomStream::new(seed, 0);
    let mut worst: f64 = 0.0;
    let mut exact_ok = true;
    for _ in 0..vectors {
        let xs = random_sample(rng.inner_mut(), max_len);
        let state = xs.iter().fold(NormalGammaState::prior(), |s, &x| ng_update(&s, x));
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let sq: f64 = xs.iter().map(|x| x * x).sum();
        exact_ok &= state.mu_hat() == mean
            && state.alpha() == 0.5 + n / 2.0
            && state.t_count() == xs.len() as u64;
        let err = relative_error(2.0 * state.beta() - 1.0, ss, 1e-12 * sq);
        worst = worst.max(err);
    }
    CheckResult {
        name: "normal-gamma batch identity".into(),
        passed: exact_ok && worst <= IDENTITY_RTOL,
        margin: IDENTITY_RTOL - worst,
        cases: vectors as u64,
        detail: format!("mean/shape exact: {exact_ok}, max rel err of 2beta-1: {worst:.3e}"),
    }
}

/// Beta CDF via the Binomial identity against direct quadrature.
pub fn check_beta_binomial(max_param: u32, ys: &[f64]) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for a in 1..=max_param {
        for b in 1..=max_param {
            for &y in ys {
                let via = beta_cdf_integer(a, b, y).unwrap_or(f64::NAN);
                let quad = incomplete_beta_quadrature(a, b, y, 1e-13);
                let err = (via - quad).abs();
                worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
                cases += 1;
            }
        }
    }
    CheckResult {
        name: "beta-binomial identity".into(),
        passed: worst <= ORACLE_TOL,
        margin: ORACLE_TOL - worst,
        cases,
        detail: format!("max abs diff {worst:.3e}"),
    }
}

fn random_trace<R: RngCore>(rng: &mut R, max_arms: usize, max_len: usize) -> (RunTrace, BanditInstance) {
    let k = rng.random_range(2..=max_arms);
    let len = rng.random_range(1..=max_len);
    let mu: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
    let s2: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let rho = 10f64.powf(rng.random_range(-3.0..3.0));
    let inst = BanditInstance::gaussian(&mu, &s2, rho).expect("valid random instance");
    let arms: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
    let rewards: Vec<f64> = arms
        .iter()
        .map(|&a| mu[a] + s2[a].sqrt() * rng.random_range(-2.0..2.0))
        .collect();
    (RunTrace::new(arms, rewards, k).expect("valid random trace"), inst)
}

/// Variance decomposition, `realized = r1 + r2` and `pseudo <= eq10` on random traces.
pub fn check_regret_identities(traces: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = RandomStream::new(seed, 1);
    let (mut vd_worst, mut split_worst, mut eq10_margin) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..traces {
        let (trace, inst) = random_trace(rng.inner_mut(), 6, 60);
        let gaps = gap_table(&inst);
        let vd = variance_decomposition(&trace).expect("nonempty trace");
        vd_worst = vd_worst.max(relative_error(vd.total, vd.within + vd.between, f64::MIN_POSITIVE));
        let b = realized_regret(&trace, &gaps, inst.rho()).expect("matching shapes");
        let scale = b.r1.abs() + b.r2.abs();
        split_worst = split_worst.max(relative_error(b.realized_regret, b.r1 + b.r2, scale.max(1e-300)));
        let upper = eq10_upper(&trace, &gaps).expect("matching shapes");
        let tol = 1e-12 * upper.abs().max(1.0);
        eq10_margin = eq10_margin.min(upper - b.pseudo_regret() + tol);
    }
    let n = traces as u64;
    vec![
        CheckResult {
            name: "variance decomposition".into(),
            passed: vd_worst <= IDENTITY_RTOL,
            margin: IDENTITY_RTOL - vd_worst,
            cases: n,
            detail: format!("max rel err {vd_worst:.3e}"),
        },
        CheckResult {
            name: "realized = r1 + r2".into(),
            passed: split_worst <= IDENTITY_RTOL,
            margin: IDENTITY_RTOL - split_worst,
            cases: n,
            detail: format!("max rel err {split_worst:.3e}"),
        },
        CheckResult {
            name: "pseudo <= pull-count bound".into(),
            passed: eq10_margin >= 0.0,
            margin: eq10_margin,
            cases: n,
            detail: String::new(),
        },
    ]
}

/// Outcome of the realized-vs-pseudo Monte Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Outcome {
    pub mean_realized: f64,
    pub mean_pseudo: f64,
    pub variance_slack: f64,
    pub pooled_se: f64,
}

impl Lemma1Outcome {
    /// `mean_pseudo + 3 sum sigma^2 + 3 SE - mean_realized`.
    pub fn margin(&self) -> f64 {
        self.mean_pseudo + self.variance_slack + 3.0 * self.pooled_se - self.mean_realized
    }
}

/// Mean realized vs mean pseudo-regret over `runs` seeded runs.
pub fn lemma1_monte_carlo(
    kind: &PolicyKind,
    instance: &BanditInstance,
    horizon: u64,
    runs: u64,
    seed: u64,
) -> Result<Lemma1Outcome> {
    let gaps = gap_table(instance);
    let mut realized = Welford::default();
    let mut pseudo = Welford::default();
    for run in 0..runs {
        let mut rp = RandomStream::new(seed, stream_id(0, 0, run, StreamRole::Policy));
        let mut re = RandomStream::new(seed, stream_id(0, 0, run, StreamRole::Env));
        let trace = simulate_trace(kind, instance, horizon, &mut rp, &mut re)?;
        let b = realized_regret(&trace, &gaps, instance.rho())?;
        realized.push(b.realized_regret);
        pseudo.push(b.pseudo_regret());
    }
    Ok(Lemma1Outcome {
        mean_realized: realized.mean,
        mean_pseudo: pseudo.mean,
        variance_slack: 3.0 * instance.variances().iter().sum::<f64>(),
        pooled_se: (realized.standard_error().powi(2) + pseudo.standard_error().powi(2)).sqrt(),
    })
}

/// Three instances used for the Monte Carlo check.
pub fn lemma1_cases() -> Vec<(&'static str, PolicyKind, BanditInstance)> {
    vec![
        (
            "2-arm gaussian mvts",
            PolicyKind::new(PolicyTag::Mvts),
            BanditInstance::gaussian(&[0.5, 0.4], &[0.1, 0.3], 1.0).expect("valid"),
        ),
        (
            "15-arm gaussian mv_lcb",
            PolicyKind::new(PolicyTag::MvLcbGaussian),
            BanditInstance::gaussian15(0.001),
        ),
        (
            "15-arm bernoulli bmvts",
            PolicyKind::new(PolicyTag::Bmvts),
            BanditInstance::bernoulli15(0.444),
        ),
    ]
}

pub fn check_lemma1(runs: u64, horizon: u64, seed: u64) -> Vec<CheckResult> {
    lemma1_cases()
        .into_iter()
        .map(|(name, kind, inst)| match lemma1_monte_carlo(&kind, &inst, horizon, runs, seed) {
            Ok(o) => CheckResult {
                name: format!("realized vs pseudo: {name}"),
                passed: o.margin() >= 0.0,
                margin: o.margin(),
                cases: runs,
                detail: format!(
                    "E[realized]={:.4} E[pseudo]={:.4} slack={:.4} se={:.4}",
                    o.mean_realized, o.mean_pseudo, o.variance_slack, o.pooled_se
                ),
            },
            Err(e) => CheckResult {
                name: format!("realized vs pseudo: {name}"),
                passed: false,
                margin: f64::NEG_INFINITY,
                cases: 0,
                detail: e.to_string(),
            },
        })
        .collect()
}

/// Runs every suite. `quick` shrinks grids and sample counts.
pub fn run_selfcheck(quick: bool) -> SelfCheckReport {
    run_selfcheck_with(quick, h)
}

/// [`run_selfcheck`] with a replacement for `h` in the tail and shape checks.
pub fn run_selfcheck_with<H>(quick: bool, rate_fn: H) -> SelfCheckReport
where
    H: Fn(f64) -> Result<f64> + Copy,
{
    let started = Instant::now();
    let grid = if quick { TailGrid::quick() } else { TailGrid::full() };
    let (vectors, beta_max, traces, runs, horizon) = if quick {
        (200, 8, 1_000, 500, 200)
    } else {
        (1_000, 20, 10_000, 500, 1_000)
    };
    let ys: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let mut checks = vec![
        check_posterior_identities(vectors, 200, SELFCHECK_SEED),
        check_beta_binomial(beta_max, &ys),
        check_tail_sandwich(rate_fn, &grid),
        check_lower_bound_shape_two(&grid),
        check_h_shape(rate_fn),
    ];
    checks.extend(check_regret_identities(traces, SELFCHECK_SEED));
    checks.extend(check_lemma1(runs, horizon, SELFCHECK_SEED));
    SelfCheckReport {
        checks,
        elapsed_secs: started.elapsed().as_secs_f64(),
    }
}
