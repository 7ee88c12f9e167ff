//! Arm-selection rules: Thompson Sampling for the mean (MTS), the variance
//! (VTS), both (MVTS), the Bernoulli variant (BMVTS), and mean-variance LCB
//! baselines for both families.

use serde::{Deserialize, Serialize};

use crate::env::{argmax_lowest, sample_reward, BanditInstance, Family};
use crate::error::{Error, Result};
use crate::posterior::{BetaState, NormalGammaState};
use crate::rng::DrawSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    Mts,
    Vts,
    Mvts,
    Bmvts,
    MvLcbGaussian,
    MvLcbBernoulli,
}

impl PolicyTag {
    pub fn family(self) -> Family {
        match self {
            PolicyTag::Mts | PolicyTag::Vts | PolicyTag::Mvts | PolicyTag::MvLcbGaussian => {
                Family::Gaussian
            }
            PolicyTag::Bmvts | PolicyTag::MvLcbBernoulli => Family::Bernoulli,
        }
    }

    /// Gaussian Thompson policies play each arm once before sampling.
    pub fn needs_initial_round_robin(self) -> bool {
        matches!(self, PolicyTag::Mts | PolicyTag::Vts | PolicyTag::Mvts)
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyTag::Mts => "mts",
            PolicyTag::Vts => "vts",
            PolicyTag::Mvts => "mvts",
            PolicyTag::Bmvts => "bmvts",
            PolicyTag::MvLcbGaussian | PolicyTag::MvLcbBernoulli => "mv_lcb",
        }
    }

    pub fn parse(s: &str, family: Family) -> Result<Self> {
        let tag = match s {
            "mts" => PolicyTag::Mts,
            "vts" => PolicyTag::Vts,
            "mvts" => PolicyTag::Mvts,
            "bmvts" => PolicyTag::Bmvts,
            "mv_lcb" => match family {
                Family::Gaussian => PolicyTag::MvLcbGaussian,
                Family::Bernoulli => PolicyTag::MvLcbBernoulli,
            },
            "mv_lcb_gaussian" => PolicyTag::MvLcbGaussian,
            "mv_lcb_bernoulli" => PolicyTag::MvLcbBernoulli,
            other => return Err(Error::Config(format!("unknown policy `{other}`"))),
        };
        Ok(tag)
    }
}

/// Variance term used by MTS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtsVarianceEstimator {
    /// Population sample variance `(2 beta - 1) / T`.
    #[default]
    Empirical,
    /// The raw `2 beta` posterior rate term.
    TwoBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyKind {
    pub tag: PolicyTag,
    pub mts_variance_estimator: MtsVarianceEstimator,
    pub lcb_width_scale: f64,
}

impl PolicyKind {
    pub fn new(tag: PolicyTag) -> Self {
        Self {
            tag,
            mts_variance_estimator: MtsVarianceEstimator::Empirical,
            lcb_width_scale: 1.0,
        }
    }

    pub fn with_mts_variance_estimator(mut self, est: MtsVarianceEstimator) -> Self {
        self.mts_variance_estimator = est;
        self
    }

    pub fn with_lcb_width_scale(mut self, scale: f64) -> Self {
        self.lcb_width_scale = scale;
        self
    }

    /// Short label used in output files, e.g. `mvts` or `mts[two_beta]`.
    pub fn label(&self) -> String {
        let mut label = self.tag.name().to_string();
        match self.tag {
            PolicyTag::Mts if self.mts_variance_estimator == MtsVarianceEstimator::TwoBeta => {
                label.push_str("[two_beta]");
            }
            PolicyTag::MvLcbGaussian | PolicyTag::MvLcbBernoulli
                if self.lcb_width_scale != 1.0 =>
            {
                label.push_str(&format!("[scale={}]", self.lcb_width_scale));
            }
            _ => {}
        }
        label
    }

    pub fn check_family(&self, family: Family) -> Result<()> {
        if self.tag.family() != family {
            return Err(Error::Config(format!(
                "policy {} needs a {} instance, got {}",
                self.label(),
                self.tag.family(),
                family
            )));
        }
        if !(self.lcb_width_scale > 0.0 && self.lcb_width_scale.is_finite()) {
            return Err(Error::Config(format!(
                "lcb_width_scale must be positive, got {}",
                self.lcb_width_scale
            )));
        }
        Ok(())
    }

    pub fn select_arm<S: DrawSource>(&self, state: &PolicyState, rho: f64, rng: &mut S) -> Result<usize> {
        select_arm(self, state, rho, rng)
    }

    pub fn step<P: DrawSource, E: DrawSource>(
        &self,
        state: &mut PolicyState,
        instance: &BanditInstance,
        rng_policy: &mut P,
        rng_env: &mut E,
    ) -> Result<(usize, f64)> {
        step(self, state, instance, rng_policy, rng_env)
    }
}

/// Policy block of the experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mts_variance_estimator: Option<MtsVarianceEstimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lcb_width_scale: Option<f64>,
}

impl PolicyConfig {
    pub fn resolve(&self, family: Family) -> Result<PolicyKind> {
        let tag = PolicyTag::parse(&self.policy, family)?;
        let mut kind = PolicyKind::new(tag);
        if let Some(est) = self.mts_variance_estimator {
            if tag != PolicyTag::Mts {
                return Err(Error::Config(format!(
                    "mts_variance_estimator only applies to mts, not {}",
                    self.policy
                )));
            }
            kind.mts_variance_estimator = est;
        }
        if let Some(scale) = self.lcb_width_scale {
            if !matches!(tag, PolicyTag::MvLcbGaussian | PolicyTag::MvLcbBernoulli) {
                return Err(Error::Config(format!(
                    "lcb_width_scale only applies to mv_lcb, not {}",
                    self.policy
                )));
            }
            kind.lcb_width_scale = scale;
        }
        kind.check_family(family)?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "arms", rename_all = "snake_case")]
pub enum Posteriors {
    NormalGamma(Vec<NormalGammaState>),
    Beta(Vec<BetaState>),
}

/// Mutable state of one policy run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyState {
    pub posteriors: Posteriors,
    pub pulls: Vec<u64>,
    /// Index of the round about to be played, starting at 1.
    pub round: u64,
}

impl PolicyState {
    pub fn new(kind: &PolicyKind, instance: &BanditInstance) -> Result<Self> {
        kind.check_family(instance.family())?;
        let k = instance.num_arms();
        let posteriors = match instance.family() {
            Family::Gaussian => Posteriors::NormalGamma(vec![NormalGammaState::prior(); k]),
            Family::Bernoulli => Posteriors::Beta(vec![BetaState::prior(); k]),
        };
        Ok(Self {
            posteriors,
            pulls: vec![0; k],
            round: 1,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.pulls.len()
    }

    fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        match &mut self.posteriors {
            Posteriors::NormalGamma(s) => s[arm] = s[arm].update(reward),
            Posteriors::Beta(s) => s[arm] = s[arm].update(reward)?,
        }
        self.pulls[arm] += 1;
        self.round += 1;
        Ok(())
    }
}

fn normal_gamma<'a>(kind: &PolicyKind, state: &'a PolicyState) -> Result<&'a [NormalGammaState]> {
    match &state.posteriors {
        Posteriors::NormalGamma(s) => Ok(s),
        Posteriors::Beta(_) => Err(Error::Config(format!(
            "policy {} cannot run on Beta posteriors",
            kind.label()
        ))),
    }
}

fn beta_states<'a>(kind: &PolicyKind, state: &'a PolicyState) -> Result<&'a [BetaState]> {
    match &state.posteriors {
        Posteriors::Beta(s) => Ok(s),
        Posteriors::NormalGamma(_) => Err(Error::Config(format!(
            "policy {} cannot run on Normal-Gamma posteriors",
            kind.label()
        ))),
    }
}

/// Per-arm indices for the current round. The chosen arm is their argmax.
///
/// Thompson policies consume exactly one draw per arm from each sampler
/// they use, in arm order.
pub fn arm_indices<S: DrawSource>(
    kind: &PolicyKind,
    state: &PolicyState,
    rho: f64,
    rng: &mut S,
) -> Result<Vec<f64>> {
    match kind.tag {
        PolicyTag::Mts => normal_gamma(kind, state)?
            .iter()
            .map(|s| {
                let theta = s.sample_mean(rng)?;
                let var = match kind.mts_variance_estimator {
                    MtsVarianceEstimator::Empirical => s.empirical_variance().unwrap_or(0.0),
                    MtsVarianceEstimator::TwoBeta => 2.0 * s.beta(),
                };
                Ok(rho * theta - var)
            })
            .collect(),
        PolicyTag::Vts => normal_gamma(kind, state)?
            .iter()
            .map(|s| {
                if s.t_count() == 0 {
                    return Err(Error::Precondition(
                        "VTS needs every arm pulled once before sampling".into(),
                    ));
                }
                let tau = s.sample_precision(rng)?;
                Ok(rho * s.mu_hat() - 1.0 / tau)
            })
            .collect(),
        PolicyTag::Mvts => normal_gamma(kind, state)?
            .iter()
            .map(|s| {
                let tau = s.sample_precision(rng)?;
                let theta = s.sample_mean(rng)?;
                Ok(rho * theta - 1.0 / tau)
            })
            .collect(),
        PolicyTag::Bmvts => beta_states(kind, state)?
            .iter()
            .map(|s| {
                let theta = s.sample(rng)?;
                Ok(rho * theta - theta * (1.0 - theta))
            })
            .collect(),
        PolicyTag::MvLcbGaussian => {
            let t = state.round as f64;
            Ok(normal_gamma(kind, state)?
                .iter()
                .map(|s| {
                    let Some(var) = s.empirical_variance() else {
                        return f64::INFINITY;
                    };
                    let mv = rho * s.mu_hat() - var;
                    mv + lcb_width(kind.lcb_width_scale, rho, t, s.t_count() as f64)
                })
                .collect())
        }
        PolicyTag::MvLcbBernoulli => {
            let t = state.round as f64;
            Ok(beta_states(kind, state)?
                .iter()
                .map(|s| {
                    let Some(p) = s.empirical_mean() else {
                        return f64::INFINITY;
                    };
                    let mv = rho * p - p * (1.0 - p);
                    mv + lcb_width(kind.lcb_width_scale, rho, t, s.observations())
                })
                .collect())
        }
    }
}

/// Confidence width `scale * (5 + rho) * sqrt(ln(t^2) / (2 T))`.
pub fn lcb_width(scale: f64, rho: f64, round: f64, pulls: f64) -> f64 {
    scale * (5.0 + rho) * ((round * round).ln() / (2.0 * pulls)).sqrt()
}

pub fn select_arm<S: DrawSource>(
    kind: &PolicyKind,
    state: &PolicyState,
    rho: f64,
    rng: &mut S,
) -> Result<usize> {
    Ok(argmax_lowest(&arm_indices(kind, state, rho, rng)?))
}

/// Plays one round: chooses an arm, draws its reward and updates the state.
pub fn step<P: DrawSource, E: DrawSource>(
    kind: &PolicyKind,
    state: &mut PolicyState,
    instance: &BanditInstance,
    rng_policy: &mut P,
    rng_env: &mut E,
) -> Result<(usize, f64)> {
    kind.check_family(instance.family())?;
    let k = instance.num_arms();
    if state.num_arms() != k {
        return Err(Error::Config(format!(
            "policy state has {} arms, instance has {k}",
            state.num_arms()
        )));
    }
    let arm = if kind.tag.needs_initial_round_robin() && state.round <= k as u64 {
        (state.round - 1) as usize
    } else {
        select_arm(kind, state, instance.rho(), rng_policy)?
    };
    let reward = sample_reward(instance, arm, rng_env)?;
    state.observe(arm, reward)?;
    Ok((arm, reward))
}
