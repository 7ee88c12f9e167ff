//! Regret accounting for a single reward trace.
//!
//! `realized_regret` is `n * (MV_best - empirical MV of the trace)`. It splits
//! exactly into a per-arm term `r1` and an arm-switching term `r2`. The
//! pseudo-regret replaces empirical quantities by ground-truth gaps and pull
//! counts.

use serde::Serialize;

use crate::env::GapTable;
use crate::error::{Error, Result};

/// Arms pulled and rewards observed over one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    arms: Vec<usize>,
    rewards: Vec<f64>,
    pull_counts: Vec<u64>,
}

impl RunTrace {
    pub fn new(arms: Vec<usize>, rewards: Vec<f64>, num_arms: usize) -> Result<Self> {
        if arms.len() != rewards.len() {
            return Err(Error::Domain(format!(
                "trace has {} arms but {} rewards",
                arms.len(),
                rewards.len()
            )));
        }
        let mut pull_counts = vec![0u64; num_arms];
        for &a in &arms {
            *pull_counts
                .get_mut(a)
                .ok_or(Error::ArmOutOfRange { index: a, arms: num_arms })? += 1;
        }
        Ok(Self {
            arms,
            rewards,
            pull_counts,
        })
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn num_arms(&self) -> usize {
        self.pull_counts.len()
    }

    /// Per-arm `(count, mean, population variance)` computed in two passes.
    fn arm_moments(&self) -> Vec<(u64, f64, f64)> {
        let k = self.num_arms();
        let mut sums = vec![0.0; k];
        for (&a, &x) in self.arms.iter().zip(&self.rewards) {
            sums[a] += x;
        }
        let means: Vec<f64> = sums
            .iter()
            .zip(&self.pull_counts)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let mut ss = vec![0.0; k];
        for (&a, &x) in self.arms.iter().zip(&self.rewards) {
            ss[a] += (x - means[a]).powi(2);
        }
        (0..k)
            .map(|i| {
                let c = self.pull_counts[i];
                let var = if c > 0 { ss[i] / c as f64 } else { 0.0 };
                (c, means[i], var)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretBreakdown {
    pub realized_regret: f64,
    pub r1: f64,
    pub r2: f64,
    pub pseudo_first: f64,
    pub pseudo_cross: f64,
}

impl RegretBreakdown {
    pub fn pseudo_regret(&self) -> f64 {
        self.pseudo_first + self.pseudo_cross
    }
}

fn mean_and_population_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `rho * mean - population variance` of a reward sequence.
pub fn empirical_mv(rewards: &[f64], rho: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Domain("empirical MV of an empty sequence".into()));
    }
    let (mean, var) = mean_and_population_variance(rewards);
    Ok(rho * mean - var)
}

fn check_shapes(trace: &RunTrace, gaps: &GapTable) -> Result<()> {
    if trace.num_arms() != gaps.mv.len() {
        return Err(Error::Domain(format!(
            "trace covers {} arms but the gap table has {}",
            trace.num_arms(),
            gaps.mv.len()
        )));
    }
    if trace.is_empty() {
        return Err(Error::Domain("regret of an empty trace".into()));
    }
    Ok(())
}

/// `sum_i T_i Delta_i` and `(1/n) sum_i sum_{j != i} T_i T_j Gamma_ij^2`.
pub(crate) fn pseudo_terms(pulls: &[u64], gaps: &GapTable) -> (f64, f64) {
    let n: u64 = pulls.iter().sum();
    let first = pulls
        .iter()
        .zip(&gaps.delta)
        .map(|(&t, &d)| t as f64 * d)
        .sum();
    let mut cross = 0.0;
    for (i, &ti) in pulls.iter().enumerate() {
        if ti == 0 {
            continue;
        }
        for (j, &tj) in pulls.iter().enumerate() {
            if j != i && tj > 0 {
                cross += ti as f64 * tj as f64 * gaps.gamma[i][j].powi(2);
            }
        }
    }
    (first, if n > 0 { cross / n as f64 } else { 0.0 })
}

pub fn realized_regret(trace: &RunTrace, gaps: &GapTable, rho: f64) -> Result<RegretBreakdown> {
    check_shapes(trace, gaps)?;
    let n = trace.len() as f64;
    let mv_best = gaps.mv[gaps.best_arm];
    let (overall_mean, _) = mean_and_population_variance(trace.rewards());
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for (count, mean, var) in trace.arm_moments() {
        if count == 0 {
            continue;
        }
        let t = count as f64;
        r1 += t * (mv_best - (rho * mean - var));
        r2 += t * (mean - overall_mean).powi(2);
    }
    let (pseudo_first, pseudo_cross) = pseudo_terms(trace.pull_counts(), gaps);
    Ok(RegretBreakdown {
        realized_regret: n * (mv_best - empirical_mv(trace.rewards(), rho)?),
        r1,
        r2,
        pseudo_first,
        pseudo_cross,
    })
}

pub fn pseudo_regret(trace: &RunTrace, gaps: &GapTable) -> Result<f64> {
    check_shapes(trace, gaps)?;
    let (first, cross) = pseudo_terms(trace.pull_counts(), gaps);
    Ok(first + cross)
}

/// Per-run form of the pull-count bound `sum_{i != best} T_i (Delta_i + 2 Gamma_i,max^2)`.
pub fn eq10_upper(trace: &RunTrace, gaps: &GapTable) -> Result<f64> {
    check_shapes(trace, gaps)?;
    Ok(eq10_from_pulls(trace.pull_counts(), gaps))
}

pub(crate) fn eq10_from_pulls(pulls: &[u64], gaps: &GapTable) -> f64 {
    pulls
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != gaps.best_arm)
        .map(|(i, &t)| t as f64 * (gaps.delta[i] + 2.0 * gaps.gamma_max2[i]))
        .sum()
}

/// Total population variance of a trace split into within-arm and
/// between-arm parts: `total = within + between`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceDecomposition {
    pub total: f64,
    pub within: f64,
    pub between: f64,
}

pub fn variance_decomposition(trace: &RunTrace) -> Result<VarianceDecomposition> {
    if trace.is_empty() {
        return Err(Error::Domain("variance of an empty trace".into()));
    }
    let n = trace.len() as f64;
    let (overall_mean, total) = mean_and_population_variance(trace.rewards());
    let mut within = 0.0;
    let mut between = 0.0;
    for (count, mean, var) in trace.arm_moments() {
        let t = count as f64;
        within += t * var;
        between += t * (mean - overall_mean).powi(2);
    }
    Ok(VarianceDecomposition {
        total,
        within: within / n,
        between: between / n,
    })
}

/// Running `(count, mean, M2)` moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// `sample stddev / sqrt(count)`.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }
}

/// Streaming version of [`realized_regret`]: O(K) memory, any prefix of the
/// run can be evaluated without keeping the trace.
#[derive(Debug, Clone)]
pub struct RegretAccumulator {
    rho: f64,
    overall: Welford,
    per_arm: Vec<Welford>,
    pulls: Vec<u64>,
}

impl RegretAccumulator {
    pub fn new(num_arms: usize, rho: f64) -> Self {
        Self {
            rho,
            overall: Welford::default(),
            per_arm: vec![Welford::default(); num_arms],
            pulls: vec![0; num_arms],
        }
    }

    pub fn push(&mut self, arm: usize, reward: f64) {
        self.overall.push(reward);
        self.per_arm[arm].push(reward);
        self.pulls[arm] += 1;
    }

    pub fn rounds(&self) -> u64 {
        self.overall.count
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn breakdown(&self, gaps: &GapTable) -> RegretBreakdown {
        let n = self.overall.count as f64;
        let mv_best = gaps.mv[gaps.best_arm];
        let mut r1 = 0.0;
        let mut r2 = 0.0;
        for w in self.per_arm.iter().filter(|w| w.count > 0) {
            let t = w.count as f64;
            r1 += t * (mv_best - (self.rho * w.mean - w.population_variance()));
            r2 += t * (w.mean - self.overall.mean).powi(2);
        }
        let emp_mv = self.rho * self.overall.mean - self.overall.population_variance();
        let (pseudo_first, pseudo_cross) = pseudo_terms(&self.pulls, gaps);
        RegretBreakdown {
            realized_regret: n * (mv_best - emp_mv),
            r1,
            r2,
            pseudo_first,
            pseudo_cross,
        }
    }

    pub fn eq10_upper(&self, gaps: &GapTable) -> f64 {
        eq10_from_pulls(&self.pulls, gaps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{gap_table, BanditInstance};

    fn two_arm_gaps(rho: f64) -> GapTable {
        gap_table(&BanditInstance::gaussian(&[0.5, 0.4], &[0.1, 0.3], rho).unwrap())
    }

    #[test]
    fn empirical_mv_examples() {
        assert_eq!(empirical_mv(&[1.0, 1.0], 1.0).unwrap(), 1.0);
        assert_eq!(empirical_mv(&[0.0, 1.0], 1.0).unwrap(), 0.25);
        assert_eq!(empirical_mv(&[2.0], 0.5).unwrap(), 1.0);
        assert!(matches!(empirical_mv(&[], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn best_arm_only_with_constant_rewards() {
        let inst = BanditInstance::gaussian(&[0.5, 0.4], &[0.1, 0.3], 1.0).unwrap();
        let gaps = gap_table(&inst);
        let n = 10;
        let trace = RunTrace::new(vec![0; n], vec![0.5; n], 2).unwrap();
        let b = realized_regret(&trace, &gaps, 1.0).unwrap();
        assert!((b.r1 - (-(n as f64) * 0.1)).abs() < 1e-12);
        assert_eq!(b.r2, 0.0);
        assert!((b.realized_regret - (-1.0)).abs() < 1e-12);
        assert_eq!(pseudo_regret(&trace, &gaps).unwrap(), 0.0);
        assert_eq!(eq10_upper(&trace, &gaps).unwrap(), 0.0);
    }

    #[test]
    fn two_round_hand_example() {
        let gaps = two_arm_gaps(0.0);
        let trace = RunTrace::new(vec![0, 1], vec![0.0, 0.0], 2).unwrap();
        let b = realized_regret(&trace, &gaps, 0.0).unwrap();
        assert!((b.realized_regret - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn pseudo_terms_hand_example() {
        let gaps = two_arm_gaps(0.01);
        let trace = RunTrace::new(vec![0, 1], vec![0.3, 0.7], 2).unwrap();
        let b = realized_regret(&trace, &gaps, 0.01).unwrap();
        assert!((b.pseudo_first - 0.201).abs() < 1e-12);
        assert!((b.pseudo_cross - 0.01).abs() < 1e-12);
        assert!((pseudo_regret(&trace, &gaps).unwrap() - 0.211).abs() < 1e-12);
        assert!((eq10_upper(&trace, &gaps).unwrap() - 0.221).abs() < 1e-12);
    }

    #[test]
    fn round_robin_closed_form() {
        let inst = BanditInstance::gaussian15(1.0);
        let gaps = gap_table(&inst);
        let k = inst.num_arms();
        let trace = RunTrace::new((0..k).collect(), vec![0.0; k], k).unwrap();
        let mut cross = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    cross += gaps.gamma[i][j].powi(2);
                }
            }
        }
        let expected = gaps.delta.iter().sum::<f64>() + cross / k as f64;
        let got = pseudo_regret(&trace, &gaps).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let bound: f64 = (0..k)
            .filter(|&i| i != gaps.best_arm)
            .map(|i| gaps.delta[i] + 2.0 * gaps.gamma_max2[i])
            .sum();
        assert!((eq10_upper(&trace, &gaps).unwrap() - bound).abs() < 1e-12);
        assert!(got <= bound);
    }

    #[test]
    fn shape_errors() {
        let gaps = two_arm_gaps(1.0);
        assert!(RunTrace::new(vec![0, 1], vec![0.0], 2).is_err());
        assert!(RunTrace::new(vec![0, 2], vec![0.0, 1.0], 2).is_err());
        let three = RunTrace::new(vec![0, 2], vec![0.0, 1.0], 3).unwrap();
        assert!(realized_regret(&three, &gaps, 1.0).is_err());
        let empty = RunTrace::new(vec![], vec![], 2).unwrap();
        assert!(realized_regret(&empty, &gaps, 1.0).is_err());
    }

    #[test]
    fn accumulator_matches_trace() {
        let gaps = two_arm_gaps(2.0);
        let arms = vec![0, 1, 1, 0, 0, 1, 0];
        let rewards = vec![0.3, -0.2, 0.9, 0.1, 0.4, 0.5, -1.0];
        let trace = RunTrace::new(arms.clone(), rewards.clone(), 2).unwrap();
        let mut acc = RegretAccumulator::new(2, 2.0);
        for (&a, &x) in arms.iter().zip(&rewards) {
            acc.push(a, x);
        }
        let a = acc.breakdown(&gaps);
        let b = realized_regret(&trace, &gaps, 2.0).unwrap();
        for (x, y) in [
            (a.realized_regret, b.realized_regret),
            (a.r1, b.r1),
            (a.r2, b.r2),
            (a.pseudo_first, b.pseudo_first),
            (a.pseudo_cross, b.pseudo_cross),
        ] {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert_eq!(acc.eq10_upper(&gaps), eq10_upper(&trace, &gaps).unwrap());
    }

    #[test]
    fn welford_standard_error() {
        let mut w = Welford::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            w.push(x);
        }
        assert!((w.mean - 2.5).abs() < 1e-15);
        assert!((w.sample_variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!((w.standard_error() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
