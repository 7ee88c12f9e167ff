//! Seeded random streams.
//!
//! Every random quantity in a simulation is requested through [`DrawSource`],
//! one call per logical draw. [`RandomStream`] is the production source: a
//! ChaCha8 generator keyed by `(seed, stream_id)`. ChaCha exposes 2^64
//! independent streams per key, each with a 2^68-byte period, so streams with
//! different ids never overlap.
//!
//! The trait also makes draws injectable: [`ScriptedDraws`] replays fixed
//! values and [`CountingSource`] tallies how many draws of each kind a
//! policy consumed.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

/// A source of logical random draws.
///
/// Callers are responsible for passing valid parameters; the posterior module
/// checks them before calling in.
pub trait DrawSource {
    /// One draw from N(mean, variance).
    fn normal(&mut self, mean: f64, variance: f64) -> f64;
    /// One draw from Gamma(shape, rate). Mean is `shape / rate`.
    fn gamma(&mut self, shape: f64, rate: f64) -> f64;
    /// One draw from Beta(alpha, beta).
    fn beta(&mut self, alpha: f64, beta: f64) -> f64;
    /// One Bernoulli(p) trial.
    fn bernoulli(&mut self, p: f64) -> bool;
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the underlying keystream, in 32-bit words.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// The underlying generator, for auxiliary sampling outside [`DrawSource`].
    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl DrawSource for RandomStream {
    fn normal(&mut self, mean: f64, variance: f64) -> f64 {
        // Normal::new only fails for a non-finite std dev.
        Normal::new(mean, variance.sqrt())
            .expect("finite normal parameters")
            .sample(&mut self.rng)
    }

    fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        Gamma::new(shape, 1.0 / rate)
            .expect("positive gamma parameters")
            .sample(&mut self.rng)
    }

    fn beta(&mut self, alpha: f64, beta: f64) -> f64 {
        Beta::new(alpha, beta)
            .expect("positive beta parameters")
            .sample(&mut self.rng)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        // p == 1 must always succeed; random::<f64>() lies in [0, 1).
        self.rng.random::<f64>() < p
    }
}

/// Draw counts by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrawCounts {
    pub normal: u64,
    pub gamma: u64,
    pub beta: u64,
    pub bernoulli: u64,
}

impl DrawCounts {
    pub fn total(&self) -> u64 {
        self.normal + self.gamma + self.beta + self.bernoulli
    }
}

/// Wraps another source and counts the draws that pass through it.
#[derive(Debug, Clone)]
pub struct CountingSource<S> {
    inner: S,
    counts: DrawCounts,
}

impl<S> CountingSource<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            counts: DrawCounts::default(),
        }
    }

    pub fn counts(&self) -> DrawCounts {
        self.counts
    }

    pub fn reset(&mut self) {
        self.counts = DrawCounts::default();
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: DrawSource> DrawSource for CountingSource<S> {
    fn normal(&mut self, mean: f64, variance: f64) -> f64 {
        self.counts.normal += 1;
        self.inner.normal(mean, variance)
    }

    fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        self.counts.gamma += 1;
        self.inner.gamma(shape, rate)
    }

    fn beta(&mut self, alpha: f64, beta: f64) -> f64 {
        self.counts.beta += 1;
        self.inner.beta(alpha, beta)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        self.counts.bernoulli += 1;
        self.inner.bernoulli(p)
    }
}

/// Replays pre-recorded draws, ignoring the requested parameters.
///
/// Panics when a queue runs dry; intended for tests and replays.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDraws {
    pub normals: VecDeque<f64>,
    pub gammas: VecDeque<f64>,
    pub betas: VecDeque<f64>,
    pub bernoullis: VecDeque<bool>,
}

impl ScriptedDraws {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_normals(mut self, values: &[f64]) -> Self {
        self.normals.extend(values);
        self
    }

    pub fn with_gammas(mut self, values: &[f64]) -> Self {
        self.gammas.extend(values);
        self
    }

    pub fn with_betas(mut self, values: &[f64]) -> Self {
        self.betas.extend(values);
        self
    }

    pub fn with_bernoullis(mut self, values: &[bool]) -> Self {
        self.bernoullis.extend(values);
        self
    }

    pub fn is_exhausted(&self) -> bool {
        self.normals.is_empty()
            && self.gammas.is_empty()
            && self.betas.is_empty()
            && self.bernoullis.is_empty()
    }
}

impl DrawSource for ScriptedDraws {
    fn normal(&mut self, _mean: f64, _variance: f64) -> f64 {
        self.normals.pop_front().expect("scripted normal draws exhausted")
    }

    fn gamma(&mut self, _shape: f64, _rate: f64) -> f64 {
        self.gammas.pop_front().expect("scripted gamma draws exhausted")
    }

    fn beta(&mut self, _alpha: f64, _beta: f64) -> f64 {
        self.betas.pop_front().expect("scripted beta draws exhausted")
    }

    fn bernoulli(&mut self, _p: f64) -> bool {
        self.bernoullis
            .pop_front()
            .expect("scripted bernoulli draws exhausted")
    }
}
