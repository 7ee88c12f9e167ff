//! Conjugate posteriors: Normal-Gamma for Gaussian arms, Beta for Bernoulli.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DrawSource;

/// Normal-Gamma posterior over an arm's (mean, precision).
///
/// The prior is `(mu_hat, T, alpha, beta) = (0, 0, 1/2, 1/2)`. The mean is
/// kept as a running sum so `mu_hat` equals the batch sample mean bit for bit
/// when the samples are summed in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaState {
    reward_sum: f64,
    mu_hat: f64,
    t_count: u64,
    alpha: f64,
    beta: f64,
}

impl Default for NormalGammaState {
    fn default() -> Self {
        Self::prior()
    }
}

impl NormalGammaState {
    pub fn prior() -> Self {
        Self {
            reward_sum: 0.0,
            mu_hat: 0.0,
            t_count: 0,
            alpha: 0.5,
            beta: 0.5,
        }
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn t_count(&self) -> u64 {
        self.t_count
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Population variance of the observed samples, `(2 beta - 1) / T`.
    pub fn empirical_variance(&self) -> Option<f64> {
        (self.t_count > 0).then(|| (2.0 * self.beta - 1.0) / self.t_count as f64)
    }

    /// Folds one observation into the posterior.
    #[must_use]
    pub fn update(&self, x: f64) -> Self {
        let t = self.t_count as f64;
        let dev = x - self.mu_hat;
        let reward_sum = self.reward_sum + x;
        let t_count = self.t_count + 1;
        Self {
            reward_sum,
            mu_hat: reward_sum / t_count as f64,
            t_count,
            alpha: self.alpha + 0.5,
            beta: self.beta + t / (t + 1.0) * dev * dev / 2.0,
        }
    }

    /// Draws a mean sample `theta ~ N(mu_hat, 1/T)`.
    pub fn sample_mean<S: DrawSource>(&self, rng: &mut S) -> Result<f64> {
        if self.t_count == 0 {
            return Err(Error::Precondition(
                "mean sampling needs at least one observation (variance 1/T undefined at T = 0)"
                    .into(),
            ));
        }
        Ok(rng.normal(self.mu_hat, 1.0 / self.t_count as f64))
    }

    /// Draws a precision sample `tau ~ Gamma(alpha, beta)` (shape, rate).
    pub fn sample_precision<S: DrawSource>(&self, rng: &mut S) -> Result<f64> {
        sample_gamma(self.alpha, self.beta, rng)
    }
}

pub fn ng_update(state: &NormalGammaState, x: f64) -> NormalGammaState {
    state.update(x)
}

pub fn ng_sample_mean<S: DrawSource>(state: &NormalGammaState, rng: &mut S) -> Result<f64> {
    state.sample_mean(rng)
}

pub fn ng_sample_precision<S: DrawSource>(state: &NormalGammaState, rng: &mut S) -> Result<f64> {
    state.sample_precision(rng)
}

/// One Gamma(shape, rate) draw with parameter checks.
pub fn sample_gamma<S: DrawSource>(shape: f64, rate: f64, rng: &mut S) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(Error::Precondition(format!(
            "gamma parameters must be positive, got shape={shape}, rate={rate}"
        )));
    }
    Ok(rng.gamma(shape, rate))
}

/// Beta posterior over a Bernoulli success probability, prior Beta(1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaState {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaState {
    fn default() -> Self {
        Self::prior()
    }
}

impl BetaState {
    pub fn prior() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Precondition(format!(
                "beta parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Observations folded in so far, assuming the Beta(1, 1) prior.
    pub fn observations(&self) -> f64 {
        self.alpha + self.beta - 2.0
    }

    /// Empirical success rate, `None` before the first observation.
    pub fn empirical_mean(&self) -> Option<f64> {
        let n = self.observations();
        (n > 0.0).then(|| (self.alpha - 1.0) / n)
    }

    pub fn update(&self, x: f64) -> Result<Self> {
        if x != 0.0 && x != 1.0 {
            return Err(Error::Domain(format!(
                "beta update needs a reward in {{0, 1}}, got {x}"
            )));
        }
        Ok(Self {
            alpha: self.alpha + x,
            beta: self.beta + (1.0 - x),
        })
    }

    pub fn sample<S: DrawSource>(&self, rng: &mut S) -> Result<f64> {
        Self::new(self.alpha, self.beta)?;
        Ok(rng.beta(self.alpha, self.beta))
    }
}

pub fn beta_update(state: &BetaState, x: f64) -> Result<BetaState> {
    state.update(x)
}

pub fn beta_sample<S: DrawSource>(state: &BetaState, rng: &mut S) -> Result<f64> {
    state.sample(rng)
}

/// CDF of Beta(alpha, beta) at `y` for integer parameters, computed through
/// the binomial tail: `F(y) = 1 - P(Bin(alpha + beta - 1, y) <= alpha - 1)`.
pub fn beta_cdf_integer(alpha: u32, beta: u32, y: f64) -> Result<f64> {
    if alpha == 0 || beta == 0 {
        return Err(Error::Domain("beta parameters must be positive integers".into()));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("beta cdf needs y in [0, 1], got {y}")));
    }
    let trials = alpha + beta - 1;
    Ok(1.0 - binomial_cdf(trials, y, alpha - 1))
}

/// `P(Bin(trials, p) <= k)` by direct summation of the mass function.
pub fn binomial_cdf(trials: u32, p: f64, k: u32) -> f64 {
    if k >= trials {
        return 1.0;
    }
    let q = 1.0 - p;
    let mut coeff = 1.0f64;
    let mut total = 0.0;
    for j in 0..=k {
        if j > 0 {
            coeff *= f64::from(trials - j + 1) / f64::from(j);
        }
        total += coeff * p.powi(j as i32) * q.powi((trials - j) as i32);
    }
    total.min(1.0)
}
