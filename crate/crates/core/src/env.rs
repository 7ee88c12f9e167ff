//! Bandit instances, reward generation and ground-truth mean-variance gaps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DrawSource;

const GAUSSIAN15: &str = include_str!("../data/gaussian15.json");
const BERNOULLI15: &str = include_str!("../data/bernoulli15.json");

/// Risk-adjusted value `rho * mu - sigma2`. Larger is better.
pub fn mean_variance(mu: f64, sigma2: f64, rho: f64) -> f64 {
    rho * mu - sigma2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianArm {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianArm {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) || !mu.is_finite() {
            return Err(Error::Domain(format!(
                "gaussian arm needs finite mu and sigma2 > 0, got mu={mu}, sigma2={sigma2}"
            )));
        }
        Ok(Self { mu, sigma2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliArm {
    pub p: f64,
}

impl BernoulliArm {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "bernoulli arm needs 0 <= p <= 1, got {p}"
            )));
        }
        Ok(Self { p })
    }

    /// Variance `p(1 - p)`, always derived from `p`.
    pub fn variance(&self) -> f64 {
        self.p * (1.0 - self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Bernoulli,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gaussian => f.write_str("gaussian"),
            Family::Bernoulli => f.write_str("bernoulli"),
        }
    }
}

/// A homogeneous arm family.
#[derive(Debug, Clone, PartialEq)]
pub enum Arms {
    Gaussian(Vec<GaussianArm>),
    Bernoulli(Vec<BernoulliArm>),
}

impl Arms {
    pub fn len(&self) -> usize {
        match self {
            Arms::Gaussian(a) => a.len(),
            Arms::Bernoulli(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An arm family plus the risk tolerance `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    arms: Arms,
    rho: f64,
}

impl BanditInstance {
    pub fn new(arms: Arms, rho: f64) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::Domain(format!(
                "an instance needs at least 2 arms, got {}",
                arms.len()
            )));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be finite and >= 0, got {rho}")));
        }
        match &arms {
            Arms::Gaussian(a) => {
                for arm in a {
                    GaussianArm::new(arm.mu, arm.sigma2)?;
                }
            }
            Arms::Bernoulli(a) => {
                for arm in a {
                    BernoulliArm::new(arm.p)?;
                }
            }
        }
        Ok(Self { arms, rho })
    }

    pub fn gaussian(mu: &[f64], sigma2: &[f64], rho: f64) -> Result<Self> {
        if mu.len() != sigma2.len() {
            return Err(Error::Domain(format!(
                "mu has {} entries but sigma2 has {}",
                mu.len(),
                sigma2.len()
            )));
        }
        let arms = mu
            .iter()
            .zip(sigma2)
            .map(|(&m, &s)| GaussianArm::new(m, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Arms::Gaussian(arms), rho)
    }

    pub fn bernoulli(p: &[f64], rho: f64) -> Result<Self> {
        let arms = p
            .iter()
            .map(|&p| BernoulliArm::new(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Arms::Bernoulli(arms), rho)
    }

    /// The 15-arm Gaussian benchmark shipped in `data/gaussian15.json`.
    pub fn gaussian15(rho: f64) -> Self {
        Self::from_json_str(GAUSSIAN15)
            .and_then(|i| i.with_rho(rho))
            .expect("bundled gaussian instance is valid")
    }

    /// The 15-arm Bernoulli benchmark shipped in `data/bernoulli15.json`.
    pub fn bernoulli15(rho: f64) -> Self {
        Self::from_json_str(BERNOULLI15)
            .and_then(|i| i.with_rho(rho))
            .expect("bundled bernoulli instance is valid")
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.arms.clone(), rho)
    }

    pub fn arms(&self) -> &Arms {
        &self.arms
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn family(&self) -> Family {
        match self.arms {
            Arms::Gaussian(_) => Family::Gaussian,
            Arms::Bernoulli(_) => Family::Bernoulli,
        }
    }

    pub fn means(&self) -> Vec<f64> {
        match &self.arms {
            Arms::Gaussian(a) => a.iter().map(|x| x.mu).collect(),
            Arms::Bernoulli(a) => a.iter().map(|x| x.p).collect(),
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        match &self.arms {
            Arms::Gaussian(a) => a.iter().map(|x| x.sigma2).collect(),
            Arms::Bernoulli(a) => a.iter().map(BernoulliArm::variance).collect(),
        }
    }

    /// Human-readable notes about conditions the regret theory assumes.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Arms::Gaussian(a) = &self.arms {
            for (i, arm) in a.iter().enumerate() {
                if arm.sigma2 > 1.0 {
                    out.push(format!(
                        "arm {i} has sigma2 = {} > 1; regret constants assume unit-bounded variances",
                        arm.sigma2
                    ));
                }
            }
        }
        out
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)
            .map_err(|e| Error::Config(format!("instance definition: {e}")))?;
        file.into_instance()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        file.into_instance()
    }

    pub fn to_file_repr(&self) -> InstanceFile {
        match &self.arms {
            Arms::Gaussian(a) => InstanceFile {
                family: Family::Gaussian,
                mu: Some(a.iter().map(|x| x.mu).collect()),
                sigma2: Some(a.iter().map(|x| x.sigma2).collect()),
                p: None,
                rho: self.rho,
            },
            Arms::Bernoulli(a) => InstanceFile {
                family: Family::Bernoulli,
                mu: None,
                sigma2: None,
                p: Some(a.iter().map(|x| x.p).collect()),
                rho: self.rho,
            },
        }
    }
}

/// On-disk instance definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    pub rho: f64,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<BanditInstance> {
        match self.family {
            Family::Gaussian => {
                if self.p.is_some() {
                    return Err(Error::Config("gaussian instance must not define `p`".into()));
                }
                let mu = self
                    .mu
                    .ok_or_else(|| Error::Config("gaussian instance requires `mu`".into()))?;
                let sigma2 = self
                    .sigma2
                    .ok_or_else(|| Error::Config("gaussian instance requires `sigma2`".into()))?;
                BanditInstance::gaussian(&mu, &sigma2, self.rho)
            }
            Family::Bernoulli => {
                if self.mu.is_some() || self.sigma2.is_some() {
                    return Err(Error::Config(
                        "bernoulli instance must not define `mu` or `sigma2`".into(),
                    ));
                }
                let p = self
                    .p
                    .ok_or_else(|| Error::Config("bernoulli instance requires `p`".into()))?;
                BanditInstance::bernoulli(&p, self.rho)
            }
        }
    }
}

/// Ground-truth mean-variance quantities of an instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTable {
    /// `MV_i = rho * mu_i - sigma2_i`.
    pub mv: Vec<f64>,
    /// Argmax of `mv`, lowest index on ties.
    pub best_arm: usize,
    /// `delta[i] = mv[best] - mv[i]`.
    pub delta: Vec<f64>,
    /// `gamma[i][j] = mu_i - mu_j`.
    pub gamma: Vec<Vec<f64>>,
    /// `max_j (mu_i - mu_j)^2`.
    pub gamma_max2: Vec<f64>,
}

pub fn gap_table(instance: &BanditInstance) -> GapTable {
    let mu = instance.means();
    let var = instance.variances();
    let rho = instance.rho();
    let mv: Vec<f64> = mu
        .iter()
        .zip(&var)
        .map(|(&m, &s)| mean_variance(m, s, rho))
        .collect();
    let best_arm = argmax_lowest(&mv);
    let delta = mv.iter().map(|&v| mv[best_arm] - v).collect();
    let gamma: Vec<Vec<f64>> = mu
        .iter()
        .map(|&mi| mu.iter().map(|&mj| mi - mj).collect())
        .collect();
    let gamma_max2 = gamma
        .iter()
        .map(|row| row.iter().map(|g| g * g).fold(0.0, f64::max))
        .collect();
    GapTable {
        mv,
        best_arm,
        delta,
        gamma,
        gamma_max2,
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws one reward from `arm`.
pub fn sample_reward<S: DrawSource>(
    instance: &BanditInstance,
    arm: usize,
    rng: &mut S,
) -> Result<f64> {
    let k = instance.num_arms();
    match instance.arms() {
        Arms::Gaussian(a) => {
            let a = a.get(arm).ok_or(Error::ArmOutOfRange { index: arm, arms: k })?;
            Ok(rng.normal(a.mu, a.sigma2))
        }
        Arms::Bernoulli(a) => {
            let a = a.get(arm).ok_or(Error::ArmOutOfRange { index: arm, arms: k })?;
            Ok(if rng.bernoulli(a.p) { 1.0 } else { 0.0 })
        }
    }
}
