//! Analytic toolkit: the variance-discrimination rate `h`, two-sided Gamma
//! tail bounds, and the `log n` regret coefficients of the four Thompson
//! policies.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::env::{argmax_lowest, gap_table, BanditInstance, Family};
use crate::error::{Error, Result};
use crate::policies::PolicyTag;

/// `h(x) = (x - 1 - ln x) / 2` for `x > 0`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn h(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("h(x) needs x > 0, got {x}")));
    }
    Ok(0.5 * (x - 1.0 - x.ln()))
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_tail_args(alpha: f64, beta: f64, x: f64) -> Result<()> {
    if !(alpha >= 2.0) {
        return Err(Error::Hypothesis(format!(
            "gamma tail bounds need shape >= 2, got {alpha}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {beta}")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("tail point must be positive, got {x}")));
    }
    Ok(())
}

/// Lower bound on `P(X >= x)`, `X ~ Gamma(alpha, beta)` (shape, rate):
/// `exp(-beta x) (1 + beta x)^(alpha - 1) / Gamma(alpha)`.
pub fn gamma_tail_lower(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    check_tail_args(alpha, beta, x)?;
    let z = beta * x;
    Ok((-z + (alpha - 1.0) * z.ln_1p() - ln_gamma(alpha)).exp())
}

/// Upper bound on `P(X >= x)` for `x > alpha / beta`:
/// `exp(-2 alpha h(beta x / alpha))`.
pub fn gamma_tail_upper(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    gamma_tail_upper_with(h, alpha, beta, x)
}

/// [`gamma_tail_upper`] with the rate function supplied by the caller.
pub fn gamma_tail_upper_with<H>(rate_fn: H, alpha: f64, beta: f64, x: f64) -> Result<f64>
where
    H: Fn(f64) -> Result<f64>,
{
    check_tail_args(alpha, beta, x)?;
    if x <= alpha / beta {
        return Err(Error::Domain(format!(
            "upper tail bound needs x > alpha/beta = {}, got {x}",
            alpha / beta
        )));
    }
    Ok((-2.0 * alpha * rate_fn(beta * x / alpha)?).exp())
}

/// Per-policy `log n` coefficient of the asymptotic pseudo-regret bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub policy: PolicyTag,
    pub rho: f64,
    /// The mean-variance optimal arm, in the caller's arm order.
    pub best_arm: usize,
    /// Coefficient per arm; zero for the best arm.
    pub per_arm: Vec<f64>,
    pub total_coefficient: f64,
    /// Whether each arm meets the theorem's hypotheses (the best arm always does).
    pub assumptions_ok: Vec<bool>,
    /// `sum 2 / Gamma_1i` per unit `rho log n`, the large-`rho` limit (MVTS only).
    pub limit_rho_inf: Option<f64>,
    /// Small-`rho` limit `sum (sigma_i^2 - sigma_1^2 + 2 Gamma_i,max^2) / h(sigma_i^2 / sigma_1^2)` (MVTS only).
    pub limit_rho_0: Option<f64>,
    pub flags: Vec<String>,
}

impl BoundReport {
    pub fn all_assumptions_ok(&self) -> bool {
        self.assumptions_ok.iter().all(|&ok| ok)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "policy {:?}  rho {}  best arm {}\n{:>5} {:>16} {:>11}\n",
            self.policy, self.rho, self.best_arm, "arm", "coefficient", "hypotheses"
        );
        for (i, (c, ok)) in self.per_arm.iter().zip(&self.assumptions_ok).enumerate() {
            if i == self.best_arm {
                continue;
            }
            out.push_str(&format!("{i:>5} {c:>16.6} {:>11}\n", if *ok { "ok" } else { "violated" }));
        }
        out.push_str(&format!("total {:>16.6}\n", self.total_coefficient));
        if let Some(v) = self.limit_rho_inf {
            out.push_str(&format!("limit_rho_inf {v:.6}\n"));
        }
        if let Some(v) = self.limit_rho_0 {
            out.push_str(&format!("limit_rho_0 {v:.6}\n"));
        }
        for f in &self.flags {
            out.push_str(&format!("note: {f}\n"));
        }
        out
    }
}

/// Multiplies a rate factor by the pull-cost weight, keeping `inf * 0` at `inf`.
fn weighted(factor: f64, weight: f64) -> f64 {
    if factor.is_infinite() {
        f64::INFINITY
    } else {
        factor * weight
    }
}

fn h_or_zero(x: f64) -> f64 {
    h(x).unwrap_or(0.0)
}

pub fn asymptotic_regret_coefficient(
    tag: PolicyTag,
    instance: &BanditInstance,
) -> Result<BoundReport> {
    let family = instance.family();
    if tag.family() != family {
        return Err(Error::Config(format!(
            "{tag:?} bound needs a {} instance, got {family}",
            tag.family()
        )));
    }
    if matches!(tag, PolicyTag::MvLcbGaussian | PolicyTag::MvLcbBernoulli) {
        return Err(Error::Config("no asymptotic coefficient is defined for MV-LCB".into()));
    }

    let rho = instance.rho();
    let mu = instance.means();
    let var = instance.variances();
    let gaps = gap_table(instance);
    let best = gaps.best_arm;
    let k = instance.num_arms();
    let (mu1, var1) = (mu[best], var[best]);
    let mut flags = Vec::new();

    // VTS ratio hypothesis: rho <= min { Delta_i / Gamma_i : ratio > 0 }.
    let vts_ratio_ok = {
        let min_ratio = (0..k)
            .filter(|&i| i != best)
            .map(|i| gaps.delta[i] / (mu1 - mu[i]))
            .filter(|r| *r > 0.0 && r.is_finite())
            .fold(f64::INFINITY, f64::min);
        rho <= min_ratio
    };

    let mut per_arm = vec![0.0; k];
    let mut assumptions_ok = vec![true; k];
    for i in (0..k).filter(|&i| i != best) {
        let gap_mean = mu1 - mu[i];
        let weight = gaps.delta[i] + 2.0 * gaps.gamma_max2[i];
        let ratio_h = h_or_zero(var[i] / var1);
        let (factor, ok) = match tag {
            PolicyTag::Mts => {
                let denom = (rho * gap_mean - var1).powi(2);
                (2.0 * rho * rho / denom, rho > var1 / gap_mean)
            }
            PolicyTag::Vts => (
                1.0 / ratio_h,
                vts_ratio_ok && gap_mean * gap_mean > 2.0 * var1 * ratio_h,
            ),
            PolicyTag::Mvts => ((2.0 / (gap_mean * gap_mean)).max(1.0 / ratio_h), true),
            PolicyTag::Bmvts => {
                let reflected = 1.0 - rho - mu1 - mu[i];
                (
                    (1.0 / (2.0 * gap_mean * gap_mean)).max(1.0 / (2.0 * reflected * reflected)),
                    rho > 0.0 && rho < 1.0,
                )
            }
            PolicyTag::MvLcbGaussian | PolicyTag::MvLcbBernoulli => unreachable!(),
        };
        let coef = if factor.is_nan() { f64::INFINITY } else { weighted(factor, weight) };
        if coef.is_infinite() {
            flags.push(format!(
                "arm {i}: coefficient is infinite (degenerate mean gap or variance ratio); the bound is vacuous"
            ));
        }
        per_arm[i] = coef;
        assumptions_ok[i] = ok;
    }
    let total_coefficient = per_arm.iter().sum();

    let (limit_rho_inf, limit_rho_0) = if tag == PolicyTag::Mvts {
        let top_mean = argmax_lowest(&mu);
        let inf: f64 = (0..k)
            .filter(|&i| i != top_mean)
            .map(|i| 2.0 / (mu[top_mean] - mu[i]))
            .map(|v| if v.is_finite() && v > 0.0 { v } else { f64::INFINITY })
            .sum();
        let neg_var: Vec<f64> = var.iter().map(|v| -v).collect();
        let low_var = argmax_lowest(&neg_var);
        let zero: f64 = (0..k)
            .filter(|&i| i != low_var)
            .map(|i| {
                let num = var[i] - var[low_var] + 2.0 * gaps.gamma_max2[i];
                weighted(1.0 / h_or_zero(var[i] / var[low_var]), num)
            })
            .sum();
        (Some(inf), Some(zero))
    } else {
        (None, None)
    };

    if !assumptions_ok.iter().all(|&ok| ok) {
        flags.push(format!("{tag:?}: theorem hypotheses fail for some arms at rho = {rho}"));
    }
    if family == Family::Gaussian {
        flags.extend(instance.warnings());
    }

    Ok(BoundReport {
        policy: tag,
        rho,
        best_arm: best,
        per_arm,
        total_coefficient,
        assumptions_ok,
        limit_rho_inf,
        limit_rho_0,
        flags,
    })
}
