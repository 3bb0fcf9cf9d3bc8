//! Variational Rényi divergence estimation.
//!
//! For a critic `T`, the objective
//!
//! ```text
//! V(T) = 1/(α−1) · log E_Q[exp((α−1) T)] − 1/α · log E_P[exp(α T)]
//! ```
//!
//! lower-bounds `R_α(Q‖P) = D_α(Q‖P) / α`, with equality at `T = log(dQ/dP)`.
//! [`train`] maximizes the sample version over a [`CriticNetwork`] by
//! minibatch gradient ascent. The two normalizing expectations in the gradient
//! are replaced by exponential moving averages across minibatches, which
//! removes most of the small-batch bias of the ratio.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::critic::{CriticNetwork, Standardization, DEFAULT_LAYER_SIZES};
use crate::divergence::{log_mean_exp, Order, SampleSet};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DvConfig {
    pub order: Order,
    pub batch_size: usize,
    pub ema_rate: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub clamp_bound: Option<f64>,
    pub param_radius: Option<f64>,
    pub layer_sizes: Vec<usize>,
    /// Standardize critic inputs with the pooled training mean and spread.
    pub standardize: bool,
}

impl DvConfig {
    pub const DEFAULT_BATCH_SIZE: usize = 400;
    pub const DEFAULT_EMA_RATE: f64 = 0.99;
    pub const DEFAULT_STEP_SIZE: f64 = 0.1;
    pub const DEFAULT_EPOCHS: usize = 60;
    pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
    pub const DEFAULT_CLAMP_BOUND: f64 = 1.5;

    pub fn new(order: Order) -> Self {
        DvConfig {
            order,
            batch_size: Self::DEFAULT_BATCH_SIZE,
            ema_rate: Self::DEFAULT_EMA_RATE,
            step_size: Self::DEFAULT_STEP_SIZE,
            epochs: Self::DEFAULT_EPOCHS,
            train_fraction: Self::DEFAULT_TRAIN_FRACTION,
            seed: 0,
            clamp_bound: Some(Self::DEFAULT_CLAMP_BOUND),
            param_radius: None,
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            standardize: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate < 1.0) {
            return Err(Error::invalid(
                "ema_rate",
                format!("must lie in (0, 1), got {}", self.ema_rate),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size", "must be finite and > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid("train_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Smallest per-side sample count that leaves one full training batch.
    pub fn min_samples(&self) -> usize {
        (self.batch_size as f64 / self.train_fraction).ceil() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvEstimate {
    /// Variational value on the validation split.
    pub r_hat: f64,
    /// `α · r_hat`, the estimate on the usual `D_α` scale.
    pub d_hat: f64,
    /// Mean minibatch objective of each epoch.
    pub objective_trace: Vec<f64>,
    pub critic: CriticNetwork,
    pub config: DvConfig,
    pub n_train_q: usize,
    pub n_train_p: usize,
    pub n_validation_q: usize,
    pub n_validation_p: usize,
}

/// Sample objective `1/(α−1) log mean exp((α−1) t_q) − 1/α log mean exp(α t_p)`.
pub fn dv_objective(t_on_q: &[f64], t_on_p: &[f64], order: Order) -> Result<f64> {
    if t_on_q.is_empty() || t_on_p.is_empty() {
        return Err(Error::InsufficientSamples {
            reason: "the objective needs critic values on both sides".into(),
        });
    }
    let alpha = order.alpha();
    let scaled_q: Vec<f64> = t_on_q.iter().map(|t| (alpha - 1.0) * t).collect();
    let scaled_p: Vec<f64> = t_on_p.iter().map(|t| alpha * t).collect();
    Ok(log_mean_exp(&scaled_q) / (alpha - 1.0) - log_mean_exp(&scaled_p) / alpha)
}

/// Full-batch objective of a frozen critic.
pub fn evaluate(critic: &CriticNetwork, samples_q: &[f64], samples_p: &[f64], order: Order) -> Result<f64> {
    let t_q = critic.forward_scalars(samples_q)?;
    let t_p = critic.forward_scalars(samples_p)?;
    dv_objective(&t_q, &t_p, order)
}

fn split(values: &[f64], fraction: f64) -> (&[f64], &[f64]) {
    let k = ((values.len() as f64 * fraction).floor() as usize).min(values.len());
    values.split_at(k)
}

/// `log(exp(a) + exp(b))`.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-space exponential moving average of a positive batch statistic.
#[derive(Clone, Copy, Debug)]
struct LogEma {
    rate: f64,
    value: Option<f64>,
}

impl LogEma {
    fn update(&mut self, log_batch_mean: f64) -> f64 {
        let next = match self.value {
            // First batch seeds the average so the first step has a finite denominator.
            None => log_batch_mean,
            Some(prev) => log_add_exp(self.rate.ln() + prev, (1.0 - self.rate).ln() + log_batch_mean),
        };
        self.value = Some(next);
        next
    }
}

/// Trains a critic on `Q` (first argument) against `P` and reports the
/// validation estimate of `R_α(Q‖P)`.
///
/// The first `train_fraction` of each set (in input order) is used for
/// training and the remainder for validation; with `train_fraction = 1` the
/// estimate is computed on the training data.
pub fn train(samples_q: &SampleSet, samples_p: &SampleSet, config: &DvConfig) -> Result<DvEstimate> {
    config.validate()?;
    let order = config.order;
    let alpha = order.alpha();
    let b = config.batch_size;

    let (train_q, val_q) = split(samples_q.values(), config.train_fraction);
    let (train_p, val_p) = split(samples_p.values(), config.train_fraction);
    if train_q.len() < b || train_p.len() < b {
        return Err(Error::InsufficientSamples {
            reason: format!(
                "need at least {} samples per side for batch size {b} at train fraction {} (got {} and {})",
                config.min_samples(),
                config.train_fraction,
                samples_q.len(),
                samples_p.len()
            ),
        });
    }
    let (val_q, val_p) = if val_q.is_empty() || val_p.is_empty() {
        (train_q, train_p)
    } else {
        (val_q, val_p)
    };

    let mut critic = CriticNetwork::init(
        rng::derive_seed(config.seed, &[1]),
        &config.layer_sizes,
        config.clamp_bound,
        config.param_radius,
    )?;
    if critic.input_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: critic.input_dim(),
        });
    }
    if config.standardize {
        let pooled: Vec<f64> = train_q.iter().chain(train_p).copied().collect();
        critic.set_standardization(Some(Standardization::fit_scalar(&pooled)))?;
    }

    let mut shuffle_rng = rng::stream(config.seed, &[2]);
    let mut idx_q: Vec<usize> = (0..train_q.len()).collect();
    let mut idx_p: Vec<usize> = (0..train_p.len()).collect();
    let steps = train_q.len().min(train_p.len()) / b;
    let mut ema_q = LogEma {
        rate: config.ema_rate,
        value: None,
    };
    let mut ema_p = LogEma {
        rate: config.ema_rate,
        value: None,
    };
    let log_b = (b as f64).ln();
    let mut batch = vec![0.0; 2 * b];
    let mut weights = vec![0.0; 2 * b];
    let mut objective_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        idx_q.shuffle(&mut shuffle_rng);
        idx_p.shuffle(&mut shuffle_rng);
        let mut epoch_sum = 0.0;
        for step in 0..steps {
            let window = step * b..(step + 1) * b;
            for (slot, &i) in batch[..b].iter_mut().zip(&idx_q[window.clone()]) {
                *slot = train_q[i];
            }
            for (slot, &j) in batch[b..].iter_mut().zip(&idx_p[window]) {
                *slot = train_p[j];
            }
            let view = ArrayView2::from_shape((2 * b, 1), &batch[..]).expect("column shape");
            let cache = critic.forward_cached(view);
            let t = cache.output.as_slice().expect("contiguous output");
            let (t_q, t_p) = t.split_at(b);

            let exp_q: Vec<f64> = t_q.iter().map(|v| (alpha - 1.0) * v).collect();
            let exp_p: Vec<f64> = t_p.iter().map(|v| alpha * v).collect();
            let log_mq = log_mean_exp(&exp_q);
            let log_mp = log_mean_exp(&exp_p);
            let objective = log_mq / (alpha - 1.0) - log_mp / alpha;
            if !objective.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_sum += objective;

            let denom_q = ema_q.update(log_mq) + log_b;
            let denom_p = ema_p.update(log_mp) + log_b;
            for (w, e) in weights[..b].iter_mut().zip(&exp_q) {
                *w = (e - denom_q).exp();
            }
            for (w, e) in weights[b..].iter_mut().zip(&exp_p) {
                *w = -(e - denom_p).exp();
            }
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            let grad = critic.backward(&cache, &weights);
            critic.apply_update(&grad, config.step_size)?;
        }
        objective_trace.push(epoch_sum / steps as f64);
    }

    let r_hat = evaluate(&critic, val_q, val_p, order)?;
    if !r_hat.is_finite() {
        return Err(Error::TrainingDiverged { epoch: config.epochs });
    }
    Ok(DvEstimate {
        r_hat,
        d_hat: alpha * r_hat,
        objective_trace,
        critic,
        config: config.clone(),
        n_train_q: train_q.len(),
        n_train_p: train_p.len(),
        n_validation_q: val_q.len(),
        n_validation_p: val_p.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::Layer;
    use crate::divergence::renyi_bernoulli;

    fn ord(a: f64) -> Order {
        Order::new(a).unwrap()
    }

    #[test]
    fn objective_hand_values() {
        assert_eq!(dv_objective(&[0.0; 3], &[0.0; 5], ord(2.0)).unwrap(), 0.0);
        let c = 0.83;
        let v = dv_objective(&[c; 4], &[c; 2], ord(1.25)).unwrap();
        assert!(v.abs() < 1e-12);
        let v = dv_objective(&[1.0, -1.0], &[0.0, 0.0], ord(2.0)).unwrap();
        let hand = ((1f64.exp() + (-1f64).exp()) / 2.0).ln();
        assert!((v - hand).abs() < 1e-12);
        assert!((v - 0.4338).abs() < 1e-4);
        assert!(dv_objective(&[], &[0.0], ord(2.0)).is_err());
    }

    #[test]
    fn optimal_critic_recovers_bernoulli() {
        // On {0, 1}, T(x) = log(q(x)/p(x)) is affine in x, so a 1→1 linear
        // critic represents it exactly; α·V then equals D_α(Q‖P).
        for &(q1, p1, a) in &[(0.9f64, 0.1f64, 2.0), (0.8, 0.2, 1.25), (0.35, 0.6, 3.0)] {
            let t0 = ((1.0 - q1) / (1.0 - p1)).ln();
            let t1 = (q1 / p1).ln();
            let critic = CriticNetwork::from_layers(
                vec![Layer {
                    rows: 1,
                    cols: 1,
                    weights: vec![t1 - t0],
                    bias: vec![t0],
                }],
                None,
                None,
            )
            .unwrap();
            // Exact empirical frequencies: 20 atoms per side.
            let xs_q: Vec<f64> = (0..20)
                .map(|i| if (i as f64) < q1 * 20.0 { 1.0 } else { 0.0 })
                .collect();
            let xs_p: Vec<f64> = (0..20)
                .map(|i| if (i as f64) < p1 * 20.0 { 1.0 } else { 0.0 })
                .collect();
            let v = evaluate(&critic, &xs_q, &xs_p, ord(a)).unwrap();
            let truth = renyi_bernoulli(q1, p1, ord(a)).unwrap().value();
            assert!((a * v - truth).abs() < 1e-10, "{a}: {} vs {truth}", a * v);
        }
    }

    #[test]
    fn zero_critic_evaluates_to_zero() {
        let mut critic = CriticNetwork::init(1, &[1, 4, 1], None, None).unwrap();
        critic.set_params_flat(&vec![0.0; critic.param_count()]).unwrap();
        assert_eq!(evaluate(&critic, &[1.0, 2.0], &[3.0], ord(2.0)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_small_inputs_and_bad_config() {
        let s = SampleSet::new(vec![0.0; 100], "x").unwrap();
        let cfg = DvConfig::new(ord(2.0));
        assert!(matches!(train(&s, &s, &cfg), Err(Error::InsufficientSamples { .. })));
        let mut bad = cfg.clone();
        bad.ema_rate = 1.0;
        assert!(bad.validate().is_err());
        assert_eq!(cfg.min_samples(), 500);
    }

    #[test]
    fn small_run_is_deterministic_and_scaled() {
        let mut r = rng::stream(3, &[]);
        let normal = rand_distr::StandardNormal;
        let mut draw = |shift: f64| -> Vec<f64> {
            (0..300)
                .map(|_| rand::Rng::sample::<f64, _>(&mut r, normal) + shift)
                .collect()
        };
        let q = SampleSet::new(draw(0.5), "q").unwrap();
        let p = SampleSet::new(draw(0.0), "p").unwrap();
        let mut cfg = DvConfig::new(ord(2.0)).with_seed(4).with_epochs(5);
        cfg.batch_size = 60;
        cfg.layer_sizes = vec![1, 8, 8, 1];
        let a = train(&q, &p, &cfg).unwrap();
        let b = train(&q, &p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.d_hat, 2.0 * a.r_hat);
        assert_eq!(a.objective_trace.len(), 5);
        let again = evaluate(&a.critic, &q.values()[240..], &p.values()[240..], cfg.order).unwrap();
        assert_eq!(again, a.r_hat);
    }
}
