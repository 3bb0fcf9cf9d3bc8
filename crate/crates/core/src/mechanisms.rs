//! Sample generators with known or claimed privacy.
//!
//! The scalar Gaussian mechanism and the Bernoulli attack channel have
//! closed-form divergences and serve as oracles. The miniature DP-SGD trains a
//! logistic-regression model on two Gaussian blobs, optionally with a canary
//! record appended, and reports the canary's loss under the final model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{renyi_gaussian, Order, SampleSet};
use crate::rng::{self, StreamRng};
use crate::{Error, Result};

const GAUSSIAN_STREAM: u64 = 0x6a55;
const BERNOULLI_STREAM: u64 = 0xbe27;
const BLOB_STREAM: u64 = 0xb10b;
const WARM_START_STREAM: u64 = 0x3a73;
const SAMPLING_STREAM: u64 = 0x5a3d;
const NOISE_STREAM: u64 = 0x7015;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMechanismSpec {
    pub value_without: f64,
    pub value_with: f64,
    pub sigma: f64,
}

impl GaussianMechanismSpec {
    pub fn new(value_without: f64, value_with: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
        }
        if !value_without.is_finite() || !value_with.is_finite() {
            return Err(Error::invalid("value", "query answers must be finite"));
        }
        Ok(GaussianMechanismSpec {
            value_without,
            value_with,
            sigma,
        })
    }

    /// Parses `mu0,mu1,sigma`.
    pub fn parse(s: &str) -> Result<Self> {
        let nums: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid("gaussian", format!("expected mu0,mu1,sigma, got `{s}`")))?;
        match nums[..] {
            [a, b, s] => GaussianMechanismSpec::new(a, b, s),
            _ => Err(Error::invalid("gaussian", format!("expected mu0,mu1,sigma, got `{s}`"))),
        }
    }

    /// Closed-form `D_α` between the two output distributions (symmetric here).
    pub fn true_divergence(&self, order: Order) -> Result<f64> {
        renyi_gaussian(self.value_with, self.value_without, self.sigma, order)
    }
}

/// `n` draws from `N(value_without, σ²)` and `n` from `N(value_with, σ²)`.
pub fn gaussian_pair_samples(spec: &GaussianMechanismSpec, n: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
    if n == 0 {
        return Err(Error::invalid("n", "sample count must be positive"));
    }
    let draw = |mean: f64, idx: u64| {
        let mut rng = rng::stream(seed, &[GAUSSIAN_STREAM, idx]);
        (0..n)
            .map(|_| mean + spec.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>()
    };
    Ok((
        SampleSet::new(draw(spec.value_without, 0), "without")?,
        SampleSet::new(draw(spec.value_with, 1), "with")?,
    ))
}

/// `n` draws of `Bern(tpr)` and `n` of `Bern(fpr)`, encoded as 0.0/1.0.
pub fn bernoulli_channel_samples(tpr: f64, fpr: f64, n: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
    for (name, p) in [("tpr", tpr), ("fpr", fpr)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, format!("must lie in [0, 1], got {p}")));
        }
    }
    if n == 0 {
        return Err(Error::invalid("n", "sample count must be positive"));
    }
    let draw = |p: f64, idx: u64| {
        let mut rng = rng::stream(seed, &[BERNOULLI_STREAM, idx]);
        (0..n)
            .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            .collect::<Vec<_>>()
    };
    Ok((
        SampleSet::new(draw(tpr, 0), "tpr")?,
        SampleSet::new(draw(fpr, 1), "fpr")?,
    ))
}

/// Scales `g` by `min{1, c/‖g‖₂}`. The zero vector is returned unchanged.
pub fn clip_gradient(g: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(Error::invalid("clip", format!("must be > 0, got {c}")));
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > c { c / norm } else { 1.0 };
    Ok(g.iter().map(|v| v * scale).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    /// Binary label, 0 or 1.
    pub label: f64,
}

/// Logistic regression on `features` with a trailing bias parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub dataset: Vec<Example>,
    pub canary: Example,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SyntheticTask {
    pub fn new(dataset: Vec<Example>, canary: Example) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::invalid("dataset", "must be nonempty"));
        }
        let dim = canary.features.len();
        for ex in dataset.iter().chain(std::iter::once(&canary)) {
            if ex.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: ex.features.len(),
                });
            }
            if ex.label != 0.0 && ex.label != 1.0 {
                return Err(Error::invalid("label", format!("must be 0 or 1, got {}", ex.label)));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("features", "must be finite"));
            }
        }
        Ok(SyntheticTask { dataset, canary })
    }

    /// Two isotropic unit-variance blobs centred at `±(1, 1)` with labels
    /// 1 and 0, alternating, plus the blank canary (zero features, label 1).
    pub fn blobs(n: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, &[BLOB_STREAM]);
        let dataset = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { 1.0 } else { 0.0 };
                let centre = if label == 1.0 { 1.0 } else { -1.0 };
                let features = (0..2).map(|_| centre + rng.sample::<f64, _>(StandardNormal)).collect();
                Example { features, label }
            })
            .collect();
        SyntheticTask::new(
            dataset,
            Example {
                features: vec![0.0; 2],
                label: 1.0,
            },
        )
    }

    pub fn feature_dim(&self) -> usize {
        self.canary.features.len()
    }

    pub fn param_dim(&self) -> usize {
        self.feature_dim() + 1
    }

    pub fn first_half(&self) -> Result<SyntheticTask> {
        let k = self.dataset.len() / 2;
        SyntheticTask::new(self.dataset[..k].to_vec(), self.canary.clone())
    }

    pub fn second_half(&self) -> Result<SyntheticTask> {
        let k = self.dataset.len() / 2;
        SyntheticTask::new(self.dataset[k..].to_vec(), self.canary.clone())
    }

    fn logit(params: &[f64], ex: &Example) -> f64 {
        let (w, b) = params.split_at(params.len() - 1);
        w.iter().zip(&ex.features).map(|(a, x)| a * x).sum::<f64>() + b[0]
    }

    /// Logistic loss `log(1 + e^z) − y z`.
    pub fn loss(params: &[f64], ex: &Example) -> f64 {
        let z = Self::logit(params, ex);
        softplus(z) - ex.label * z
    }

    pub fn gradient(params: &[f64], ex: &Example) -> Vec<f64> {
        let r = sigmoid(Self::logit(params, ex)) - ex.label;
        ex.features.iter().map(|x| r * x).chain(std::iter::once(r)).collect()
    }

    pub fn mean_loss(&self, params: &[f64]) -> f64 {
        self.dataset.iter().map(|ex| Self::loss(params, ex)).sum::<f64>() / self.dataset.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSgdConfig {
    pub iterations: usize,
    pub clip: f64,
    pub noise_multiplier: f64,
    pub sample_prob: f64,
    pub learning_rate: f64,
    pub init: Vec<f64>,
    pub seed: u64,
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be >= 1"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip", format!("must be > 0, got {}", self.clip)));
        }
        if !(self.noise_multiplier > 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::invalid(
                "noise_multiplier",
                format!("must be finite and > 0, got {}", self.noise_multiplier),
            ));
        }
        if !(self.sample_prob > 0.0 && self.sample_prob <= 1.0) {
            return Err(Error::invalid(
                "sample_prob",
                format!("must lie in (0, 1], got {}", self.sample_prob),
            ));
        }
        // A zero rate is admitted so the identity run can be checked.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate",
                format!("must be finite and >= 0, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpSgdOutcome {
    pub params: Vec<f64>,
    pub canary_loss: f64,
}

/// Poisson subsampling: each of `n` indices is kept independently with
/// probability `q`. All `n` coins are always drawn.
pub fn poisson_sample(rng: &mut StreamRng, n: usize, q: f64) -> Vec<bool> {
    (0..n).map(|_| rng.random::<f64>() < q).collect()
}

#[derive(Debug, Default)]
pub(crate) struct DpSgdTrace {
    pub(crate) masks: Vec<Vec<bool>>,
    pub(crate) noise: Vec<Vec<f64>>,
}

pub(crate) fn dp_sgd_traced(
    task: &SyntheticTask,
    config: &DpSgdConfig,
    include_canary: bool,
    trace: Option<&mut DpSgdTrace>,
) -> Result<DpSgdOutcome> {
    config.validate()?;
    let dim = task.param_dim();
    if config.init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: config.init.len(),
        });
    }
    let mut sampling = rng::stream(config.seed, &[SAMPLING_STREAM]);
    let mut noise_rng = rng::stream(config.seed, &[NOISE_STREAM]);
    let noise_sd = config.noise_multiplier * config.clip;
    let n = task.dataset.len();
    let mut w = config.init.clone();
    let mut trace = trace;

    for _ in 0..config.iterations {
        // The canary's coin is drawn in both runs so that paired runs stay
        // aligned on every shared index.
        let mut mask = poisson_sample(&mut sampling, n + 1, config.sample_prob);
        if !include_canary {
            mask[n] = false;
        }
        let mut aggregate: Vec<f64> = (0..dim)
            .map(|_| noise_sd * noise_rng.sample::<f64, _>(StandardNormal))
            .collect();
        if let Some(t) = trace.as_deref_mut() {
            t.noise.push(aggregate.clone());
        }
        for (i, _) in mask.iter().enumerate().filter(|(_, &keep)| keep) {
            let ex = if i < n { &task.dataset[i] } else { &task.canary };
            let g = clip_gradient(&SyntheticTask::gradient(&w, ex), config.clip)?;
            aggregate.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.masks.push(mask);
        }
        w.iter_mut()
            .zip(&aggregate)
            .for_each(|(wi, gi)| *wi -= config.learning_rate * gi);
    }
    let canary_loss = SyntheticTask::loss(&w, &task.canary);
    Ok(DpSgdOutcome { params: w, canary_loss })
}

/// Runs `ℓ` iterations of Poisson-sampled, per-example-clipped,
/// Gaussian-noised gradient descent and scores the canary.
///
/// Sampling and noise come from separate streams keyed by `config.seed`, so
/// two runs with the same seed that differ only in `include_canary` share
/// their noise and their inclusion coins for every dataset index.
pub fn dp_sgd_train(task: &SyntheticTask, config: &DpSgdConfig, include_canary: bool) -> Result<DpSgdOutcome> {
    dp_sgd_traced(task, config, include_canary, None)
}

/// Non-private minibatch gradient descent (batch 32) on the first half of
/// the dataset, starting from zero.
pub fn warm_start_params(task: &SyntheticTask, epochs: usize, lr: f64, seed: u64) -> Result<Vec<f64>> {
    if task.dataset.len() < 2 {
        return Err(Error::InsufficientSamples {
            reason: "warm start needs at least 2 records".into(),
        });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid("lr", format!("must be finite and > 0, got {lr}")));
    }
    let half = task.first_half()?;
    let mut rng = rng::stream(seed, &[WARM_START_STREAM]);
    let mut w = vec![0.0; task.param_dim()];
    let mut order: Vec<usize> = (0..half.dataset.len()).collect();
    for _ in 0..epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for batch in order.chunks(32) {
            let mut g = vec![0.0; w.len()];
            for &i in batch {
                let gi = SyntheticTask::gradient(&w, &half.dataset[i]);
                g.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
            }
            let scale = lr / batch.len() as f64;
            w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= scale * gi);
        }
    }
    Ok(w)
}

/// Divergence of the canary-loss distributions for a single full-batch step
/// with a zero-feature label-1 canary: the canary shifts only the bias by
/// `η·min{c, 1 − σ(b⁰)}` against noise of scale `η σ c`.
pub fn blank_canary_single_step_divergence(task: &SyntheticTask, config: &DpSgdConfig, order: Order) -> Result<f64> {
    config.validate()?;
    if task.canary.features.iter().any(|&x| x != 0.0) || task.canary.label != 1.0 {
        return Err(Error::Precondition("canary must have zero features and label 1".into()));
    }
    if config.iterations != 1 || config.sample_prob != 1.0 {
        return Err(Error::Precondition(
            "closed form holds for one iteration with q = 1".into(),
        ));
    }
    let bias = *config
        .init
        .last()
        .ok_or_else(|| Error::invalid("init", "must be nonempty"))?;
    let shift = (1.0 - sigmoid(bias)).min(config.clip);
    renyi_gaussian(shift, 0.0, config.noise_multiplier * config.clip, order)
}
