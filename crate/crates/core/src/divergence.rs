//! Rényi divergences with known answers.
//!
//! These serve two purposes: ground truth for the learned estimator (the
//! Gaussian and Bernoulli closed forms, plus a brute-force quadrature that is
//! independent of both), and the density-aware plug-in auditing path that is
//! available when the log-likelihood ratio of the mechanism is known.
//!
//! All exponential sums are accumulated in log space.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Order α of a Rényi divergence.
///
/// Any α > 0 with α ≠ 1 is accepted because the variational objective is
/// defined there, but only α > 1 carries divergence and privacy semantics;
/// see [`Order::is_standard`].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Order(f64);

impl Order {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid("alpha", format!("must be finite and > 0, got {alpha}")));
        }
        if alpha == 1.0 {
            return Err(Error::invalid("alpha", "order 1 is the KL limit and is not supported"));
        }
        Ok(Order(alpha))
    }

    #[inline]
    pub fn alpha(self) -> f64 {
        self.0
    }

    /// True iff α > 1.
    pub fn is_standard(self) -> bool {
        self.0 > 1.0
    }

    pub(crate) fn require_standard(self) -> Result<()> {
        if self.is_standard() {
            Ok(())
        } else {
            Err(Error::invalid(
                "alpha",
                format!("this operation requires alpha > 1, got {}", self.0),
            ))
        }
    }
}

impl TryFrom<f64> for Order {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Order::new(alpha)
    }
}

impl From<Order> for f64 {
    fn from(order: Order) -> f64 {
        order.0
    }
}

/// Ordered, nonempty collection of finite scalar observations from one
/// distribution, e.g. the canary losses of the canary-absent runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    label: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientSamples {
                reason: "a sample set needs at least one value".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "values",
                format!("value at index {i} is not finite ({})", values[i]),
            ));
        }
        Ok(SampleSet {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A divergence value that may be unbounded.
///
/// An infinite divergence is an answer, not a failure: audit pipelines report
/// it as "unbounded" instead of aborting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn is_finite(self) -> bool {
        matches!(self, Divergence::Finite(_))
    }

    /// Finite value, or `+∞`.
    pub fn value(self) -> f64 {
        match self {
            Divergence::Finite(v) => v,
            Divergence::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Divergence::Finite(v) => Some(v),
            Divergence::Infinite => None,
        }
    }
}

/// Log-likelihood ratio `L(x) = log(p(x) / q(x))` of a mechanism pair.
pub trait LogRatioOracle {
    fn log_ratio(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> LogRatioOracle for F {
    fn log_ratio(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Log-ratio of `N(mu_p, σ²)` against `N(mu_q, σ²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianLogRatio {
    pub mu_p: f64,
    pub mu_q: f64,
    pub sigma: f64,
}

impl LogRatioOracle for GaussianLogRatio {
    fn log_ratio(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        ((x - self.mu_q).powi(2) - (x - self.mu_p).powi(2)) / (2.0 * s2)
    }
}

/// `log Σ exp(xᵢ)`, or `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log((1/n) Σ exp(xᵢ))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs.iter().copied()) - (xs.len() as f64).ln()
}

/// Exact `D_α(N(mu_p, σ²) ‖ N(mu_q, σ²)) = α (mu_p − mu_q)² / (2σ²)`.
pub fn renyi_gaussian(mu_p: f64, mu_q: f64, sigma: f64, order: Order) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
    }
    let diff = mu_p - mu_q;
    Ok(order.alpha() * diff * diff / (2.0 * sigma * sigma))
}

/// `D_α` between two mass functions on a shared finite support.
///
/// Atoms where `p` vanishes contribute nothing. An atom where `q` vanishes but
/// `p` does not makes the divergence infinite for α > 1 and contributes
/// nothing for α < 1.
pub fn renyi_discrete(p: &[f64], q: &[f64], order: Order) -> Result<Divergence> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let alpha = order.alpha();
    let mut log_terms = Vec::with_capacity(p.len());
    for (&pi, &qi) in p.iter().zip(q) {
        if !(0.0..=1.0).contains(&pi) || !(0.0..=1.0).contains(&qi) {
            return Err(Error::invalid(
                "mass",
                format!("masses must lie in [0, 1], got ({pi}, {qi})"),
            ));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            if alpha > 1.0 {
                return Ok(Divergence::Infinite);
            }
            continue;
        }
        log_terms.push(alpha * pi.ln() + (1.0 - alpha) * qi.ln());
    }
    let log_sum = log_sum_exp(log_terms.iter().copied());
    Ok(Divergence::Finite(log_sum / (alpha - 1.0)))
}

/// `D_α(Bern(p) ‖ Bern(q))`.
pub fn renyi_bernoulli(p: f64, q: f64, order: Order) -> Result<Divergence> {
    renyi_discrete(&[p, 1.0 - p], &[q, 1.0 - q], order)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimate {
    pub d_hat: f64,
    /// `(1/n) Σ exp(α L(Xᵢ))`; may overflow to `+∞` even when `log_z_hat` is finite.
    pub z_hat: f64,
    pub log_z_hat: f64,
    pub n: usize,
}

/// Plug-in estimate of `D_α(P ‖ Q)` from samples of `Q` and the exact log-ratio.
pub fn plugin_estimate(samples_q: &SampleSet, oracle: &impl LogRatioOracle, order: Order) -> Result<PluginEstimate> {
    order.require_standard()?;
    let alpha = order.alpha();
    let exponents: Vec<f64> = samples_q
        .values()
        .iter()
        .map(|&x| alpha * oracle.log_ratio(x))
        .collect();
    if let Some(i) = exponents.iter().position(|e| e.is_nan()) {
        return Err(Error::invalid("oracle", format!("log-ratio is NaN at sample {i}")));
    }
    let log_z_hat = log_mean_exp(&exponents);
    Ok(PluginEstimate {
        d_hat: log_z_hat / (alpha - 1.0),
        z_hat: log_z_hat.exp(),
        log_z_hat,
        n: samples_q.len(),
    })
}

/// Integration domain for [`renyi_numeric_oracle`].
#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    /// Fixed-step trapezoidal rule on `[start, end]`.
    Uniform { start: f64, end: f64, step: f64 },
    /// Counting measure on the listed atoms; densities are mass functions.
    Atoms(Vec<f64>),
}

impl Grid {
    fn nodes_and_weights(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            Grid::Uniform { start, end, step } => {
                if !(step > &0.0) || !(end > start) || !start.is_finite() || !end.is_finite() {
                    return Err(Error::invalid("grid", "need start < end and step > 0"));
                }
                let intervals = ((end - start) / step).round().max(1.0) as usize;
                let h = (end - start) / intervals as f64;
                Ok((0..=intervals)
                    .map(|k| {
                        let w = if k == 0 || k == intervals { 0.5 * h } else { h };
                        (start + k as f64 * h, w)
                    })
                    .collect())
            }
            Grid::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::invalid("grid", "no atoms"));
                }
                Ok(atoms.iter().map(|&x| (x, 1.0)).collect())
            }
        }
    }
}

/// Brute-force `(1/(α−1)) log ∫ p^α q^{1−α}` by deterministic quadrature.
///
/// Shares no code with the closed forms, which is what makes it useful as a
/// test oracle.
pub fn renyi_numeric_oracle(
    density_p: impl Fn(f64) -> f64,
    density_q: impl Fn(f64) -> f64,
    order: Order,
    grid: &Grid,
) -> Result<Divergence> {
    let alpha = order.alpha();
    let mut integral = 0.0;
    for (x, w) in grid.nodes_and_weights()? {
        let (p, q) = (density_p(x), density_q(x));
        if p < 0.0 || q < 0.0 || p.is_nan() || q.is_nan() {
            return Err(Error::invalid("density", format!("negative or NaN density at x = {x}")));
        }
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            if alpha > 1.0 {
                return Ok(Divergence::Infinite);
            }
            continue;
        }
        // In log space so deep tails of a wide pair do not overflow `q^{1−α}`.
        integral += w * (alpha * p.ln() + (1.0 - alpha) * q.ln()).exp();
    }
    if !integral.is_finite() {
        return Ok(Divergence::Infinite);
    }
    Ok(Divergence::Finite(integral.ln() / (alpha - 1.0)))
}

/// Density of `N(mean, sd²)`.
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ord(a: f64) -> Order {
        Order::new(a).unwrap()
    }

    #[test]
    fn order_rejects_one_and_nonpositive() {
        assert!(Order::new(1.0).is_err());
        assert!(Order::new(0.0).is_err());
        assert!(Order::new(-2.0).is_err());
        assert!(Order::new(f64::NAN).is_err());
        assert!(!ord(0.5).is_standard());
        assert!(ord(1.25).is_standard());
    }

    #[test]
    fn sample_set_rejects_nonfinite_and_empty() {
        assert!(SampleSet::new(vec![], "x").is_err());
        assert!(SampleSet::new(vec![1.0, f64::NAN], "x").is_err());
        assert!(SampleSet::new(vec![f64::INFINITY], "x").is_err());
        assert_eq!(SampleSet::new(vec![1.0, 3.0], "x").unwrap().mean(), 2.0);
    }

    #[test]
    fn gaussian_closed_form() {
        assert_eq!(renyi_gaussian(0.0, 0.0, 1.0, ord(2.0)).unwrap(), 0.0);
        assert_eq!(renyi_gaussian(1.0, 0.0, 1.0, ord(2.0)).unwrap(), 1.0);
        assert_eq!(renyi_gaussian(1.0, 0.0, 1.0, ord(1.25)).unwrap(), 0.625);
        assert!(renyi_gaussian(1.0, 0.0, 0.0, ord(2.0)).is_err());
        assert!(renyi_gaussian(1.0, 0.0, -1.0, ord(2.0)).is_err());
    }

    #[test]
    fn gaussian_matches_quadrature() {
        for (alpha, expected) in [(2.0, 1.0), (1.25, 0.625)] {
            let d = renyi_numeric_oracle(
                |x| normal_pdf(x, 1.0, 1.0),
                |x| normal_pdf(x, 0.0, 1.0),
                ord(alpha),
                &Grid::Uniform {
                    start: -10.0,
                    end: 11.0,
                    step: 1e-3,
                },
            )
            .unwrap()
            .value();
            assert!((d - expected).abs() < 1e-6, "alpha {alpha}: {d}");
        }
    }

    #[test]
    fn quadrature_identical_is_zero() {
        let d = renyi_numeric_oracle(
            |x| normal_pdf(x, 0.0, 1.0),
            |x| normal_pdf(x, 0.0, 1.0),
            ord(2.0),
            &Grid::Uniform {
                start: -12.0,
                end: 12.0,
                step: 1e-3,
            },
        )
        .unwrap()
        .value();
        assert!(d.abs() < 1e-8);
    }

    #[test]
    fn bernoulli_closed_form() {
        assert_eq!(renyi_bernoulli(0.5, 0.5, ord(2.0)).unwrap(), Divergence::Finite(0.0));
        let d = renyi_bernoulli(0.9, 0.1, ord(2.0)).unwrap().value();
        let hand = (0.81f64 / 0.1 + 0.01 / 0.9).ln();
        assert!((d - hand).abs() < 1e-12);
        assert!((d - 2.09324).abs() < 1e-5);
        let d = renyi_bernoulli(0.0, 0.5, ord(2.0)).unwrap().value();
        assert!((d - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_boundary_is_infinite_not_error() {
        assert_eq!(renyi_bernoulli(0.3, 0.0, ord(2.0)).unwrap(), Divergence::Infinite);
        assert_eq!(renyi_bernoulli(0.3, 1.0, ord(2.0)).unwrap(), Divergence::Infinite);
        assert_eq!(renyi_bernoulli(1.0, 1.0, ord(2.0)).unwrap(), Divergence::Finite(0.0));
        assert!(renyi_bernoulli(1.5, 0.5, ord(2.0)).is_err());
    }

    #[test]
    fn bernoulli_matches_atom_sum() {
        for &(p, q, a) in &[(0.9, 0.1, 2.0), (0.8, 0.2, 1.25), (0.3, 0.6, 4.0), (0.0, 0.5, 2.0)] {
            let closed = renyi_bernoulli(p, q, ord(a)).unwrap().value();
            let pm = move |x: f64| if x == 1.0 { p } else { 1.0 - p };
            let qm = move |x: f64| if x == 1.0 { q } else { 1.0 - q };
            let sum = renyi_numeric_oracle(pm, qm, ord(a), &Grid::Atoms(vec![0.0, 1.0]))
                .unwrap()
                .value();
            assert!((closed - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn plugin_trivial_cases() {
        let s = SampleSet::new(vec![0.3, -1.0, 2.0], "q").unwrap();
        let e = plugin_estimate(&s, &|_x: f64| 0.0, ord(2.0)).unwrap();
        assert!(e.d_hat.abs() < 1e-15);
        assert!((e.z_hat - 1.0).abs() < 1e-15);

        let c = 0.7;
        let one = SampleSet::new(vec![5.0], "q").unwrap();
        let e = plugin_estimate(&one, &|_x: f64| c, ord(2.0)).unwrap();
        assert!((e.d_hat - 2.0 * c).abs() < 1e-12);

        assert!(plugin_estimate(&s, &|_x: f64| 0.0, ord(0.5)).is_err());
    }

    #[test]
    fn plugin_survives_large_exponents() {
        let s = SampleSet::new(vec![0.0; 4], "q").unwrap();
        let e = plugin_estimate(&s, &|_x: f64| 500.0, ord(2.0)).unwrap();
        assert!((e.d_hat - 1000.0).abs() < 1e-9);
        assert!(e.log_z_hat.is_finite());
    }

    #[test]
    fn log_sum_exp_edge_cases() {
        assert_eq!(log_sum_exp(std::iter::empty::<f64>()), f64::NEG_INFINITY);
        assert!((log_sum_exp([0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn gaussian_log_ratio_matches_densities() {
        let l = GaussianLogRatio {
            mu_p: 1.0,
            mu_q: 0.0,
            sigma: 1.5,
        };
        for x in [-2.0, 0.0, 0.4, 3.0] {
            let direct = (normal_pdf(x, 1.0, 1.5) / normal_pdf(x, 0.0, 1.5)).ln();
            assert!((l.log_ratio(x) - direct).abs() < 1e-12);
        }
    }
}
