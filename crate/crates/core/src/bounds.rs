//! Confidence machinery for audit outputs.
//!
//! Two estimation paths are covered:
//!
//! - the plug-in path (known log-ratio), with a Markov lower bound that needs
//!   no assumptions and Hoeffding bounds that need a bounded privacy loss
//!   `|L| ≤ B`;
//! - the variational path, with a covering-number confidence radius for the
//!   class-restricted objective over critics with `‖θ‖ ≤ K`, `|T_θ| ≤ M`.
//!
//! Lower bounds are reported as computed, including negative values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::divergence::Order;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lower,
    Upper,
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Markov,
    HoeffdingLower,
    HoeffdingUpper,
    DvCovering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBound {
    pub kind: BoundKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Coverage probability, `1 − β` or `1 − δ_CI`.
    pub level: f64,
    pub method: BoundMethod,
    pub inputs: BTreeMap<String, f64>,
}

impl ConfidenceBound {
    fn lower(value: f64, level: f64, method: BoundMethod, inputs: &[(&str, f64)]) -> Self {
        ConfidenceBound {
            kind: BoundKind::Lower,
            lower: Some(value),
            upper: None,
            level,
            method,
            inputs: echo(inputs),
        }
    }

    fn upper(value: f64, level: f64, method: BoundMethod, inputs: &[(&str, f64)]) -> Self {
        ConfidenceBound {
            kind: BoundKind::Upper,
            lower: None,
            upper: Some(value),
            level,
            method,
            inputs: echo(inputs),
        }
    }

    /// The lower end for lower and two-sided bounds, the upper end otherwise.
    pub fn value(&self) -> f64 {
        match self.kind {
            BoundKind::Upper => self.upper.expect("upper bound value"),
            _ => self.lower.expect("lower bound value"),
        }
    }
}

fn echo(inputs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check_level(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")))
    }
}

/// Critic class `{T_θ : θ ∈ ℝ^d, ‖θ‖ ≤ K, |T_θ| ≤ M, L-Lipschitz in θ}`.
///
/// The Lipschitz constant is carried for the record; the radius formula does
/// not consume it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticClassSpec {
    pub d: usize,
    pub k: f64,
    pub m: f64,
    pub lipschitz: f64,
}

impl CriticClassSpec {
    pub fn new(d: usize, k: f64, m: f64, lipschitz: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "parameter count must be positive"));
        }
        for (name, v) in [("K", k), ("M", m), ("L", lipschitz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "class_spec",
                    format!("{name} must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(CriticClassSpec { d, k, m, lipschitz })
    }

    /// Parses `d,K,M` or `d,K,M,L` (L defaults to 1).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::invalid("class_spec", format!("expected d,K,M[,L], got `{s}`"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let d: usize = parts[0].parse().map_err(|_| bad())?;
        let num = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
        let l = if parts.len() == 4 { num(3)? } else { 1.0 };
        CriticClassSpec::new(d, num(1)?, num(2)?, l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditDecision {
    pub reject_null: bool,
    pub epsilon_null: f64,
    pub sup_rejectable_epsilon: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// `D_α ≥ d_hat − log(1/β)/(α−1)` with probability ≥ 1 − β.
pub fn markov_lower_bound(d_hat: f64, order: Order, beta: f64) -> Result<ConfidenceBound> {
    order.require_standard()?;
    check_level("beta", beta)?;
    let alpha = order.alpha();
    let value = d_hat - (1.0 / beta).ln() / (alpha - 1.0);
    Ok(ConfidenceBound::lower(
        value,
        1.0 - beta,
        BoundMethod::Markov,
        &[("d_hat", d_hat), ("alpha", alpha), ("beta", beta)],
    ))
}

fn hoeffding_deviation(n: usize, bound: f64, alpha: f64, log_term: f64) -> f64 {
    (alpha * bound).exp() * (log_term / (2.0 * n as f64)).sqrt()
}

fn check_hoeffding(z_hat: f64, n: usize, bound: f64, order: Order, beta: f64) -> Result<()> {
    order.require_standard()?;
    check_level("beta", beta)?;
    if n == 0 {
        return Err(Error::invalid("n", "sample count must be positive"));
    }
    if !(z_hat >= 0.0) {
        return Err(Error::invalid("z_hat", format!("must be >= 0, got {z_hat}")));
    }
    if !bound.is_finite() {
        return Err(Error::invalid("B", "privacy-loss bound must be finite"));
    }
    Ok(())
}

/// Upper bound on `D_α` when `|L| ≤ B`: `log(ẑ + e^{αB}√(log(2/β)/2n))/(α−1)`.
pub fn hoeffding_upper_bound(z_hat: f64, n: usize, bound: f64, order: Order, beta: f64) -> Result<ConfidenceBound> {
    check_hoeffding(z_hat, n, bound, order, beta)?;
    let alpha = order.alpha();
    let dev = hoeffding_deviation(n, bound, alpha, (2.0 / beta).ln());
    let value = (z_hat + dev).ln() / (alpha - 1.0);
    Ok(ConfidenceBound::upper(
        value,
        1.0 - beta,
        BoundMethod::HoeffdingUpper,
        &[
            ("z_hat", z_hat),
            ("n", n as f64),
            ("B", bound),
            ("alpha", alpha),
            ("beta", beta),
        ],
    ))
}

/// Lower bound on `D_α` when `|L| ≤ B`: `log(max{1, ẑ − e^{αB}√(log(1/β)/2n)})/(α−1)`.
pub fn hoeffding_lower_bound(z_hat: f64, n: usize, bound: f64, order: Order, beta: f64) -> Result<ConfidenceBound> {
    check_hoeffding(z_hat, n, bound, order, beta)?;
    let alpha = order.alpha();
    let dev = hoeffding_deviation(n, bound, alpha, (1.0 / beta).ln());
    let value = (z_hat - dev).max(1.0).ln() / (alpha - 1.0);
    Ok(ConfidenceBound::lower(
        value,
        1.0 - beta,
        BoundMethod::HoeffdingLower,
        &[
            ("z_hat", z_hat),
            ("n", n as f64),
            ("B", bound),
            ("alpha", alpha),
            ("beta", beta),
        ],
    ))
}

/// `C_{α,M} = 4 e^{2|α|M} max{1/|α−1|, 1/|α|}`.
pub fn dv_constant(order: Order, m: f64) -> f64 {
    let alpha = order.alpha();
    4.0 * (2.0 * alpha.abs() * m).exp() * (1.0 / (alpha - 1.0).abs()).max(1.0 / alpha.abs())
}

/// Confidence radius `C_{α,M}(√((d log(K/η) + log(1/δ))/n) + η)` for the
/// class-restricted objective. `eta = 0` selects `η = n^{−1/2}`.
pub fn dv_ci_radius(n: usize, spec: &CriticClassSpec, order: Order, delta: f64, eta: f64) -> Result<f64> {
    check_level("delta", delta)?;
    if n == 0 {
        return Err(Error::invalid("n", "sample count must be positive"));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta", format!("must be finite and >= 0, got {eta}")));
    }
    let eta = if eta == 0.0 { (n as f64).powf(-0.5) } else { eta };
    if eta >= spec.k {
        return Err(Error::invalid(
            "eta",
            format!("net resolution {eta} must be below the parameter radius K = {}", spec.k),
        ));
    }
    let entropy = spec.d as f64 * (spec.k / eta).ln() + (1.0 / delta).ln();
    Ok(dv_constant(order, spec.m) * ((entropy / n as f64).sqrt() + eta))
}

/// Certificate `[r_hat − radius, r_hat + radius]` at level `1 − δ_CI`.
pub fn dv_certificate(r_hat: f64, radius: f64, delta_ci: f64) -> Result<ConfidenceBound> {
    check_level("delta_ci", delta_ci)?;
    if !(radius >= 0.0) {
        return Err(Error::invalid("radius", format!("must be >= 0, got {radius}")));
    }
    Ok(ConfidenceBound {
        kind: BoundKind::TwoSided,
        lower: Some(r_hat - radius),
        upper: Some(r_hat + radius),
        level: 1.0 - delta_ci,
        method: BoundMethod::DvCovering,
        inputs: echo(&[("r_hat", r_hat), ("radius", radius), ("delta_ci", delta_ci)]),
    })
}

/// Smallest ε certified violated: any claimed `(ε, δ)`-DP with ε below
/// `lcb + log(1/δ)/(α−1)` is refuted at the certificate's confidence.
pub fn violation_epsilon(lcb: f64, order: Order, delta: f64) -> Result<f64> {
    order.require_standard()?;
    check_level("delta", delta)?;
    Ok(lcb + (1.0 / delta).ln() / (order.alpha() - 1.0))
}

/// Tests `H₀: D_α ≤ ε_null` with the Markov rejection region.
///
/// The largest rejectable ε is `d_hat − log(1/β)/(α−1)`; the region shrinks
/// as ε grows, so rejecting at ε₂ implies rejecting at every ε₁ ≤ ε₂.
pub fn hypothesis_test(d_hat: f64, epsilon_null: f64, order: Order, beta: f64) -> Result<AuditDecision> {
    let sup = markov_lower_bound(d_hat, order, beta)?.value();
    Ok(AuditDecision {
        reject_null: sup > epsilon_null,
        epsilon_null,
        sup_rejectable_epsilon: sup,
        beta,
        alpha: order.alpha(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Smallest n whose confidence radius (with η = n^{−1/2}) is ≤ the target.
    pub n_upper: u64,
    /// `⌈d / ε²⌉`, the minimax floor with its unknown constant set to 1
    /// (order of magnitude only).
    pub n_floor: u64,
    pub target_eps: f64,
    pub constant_c_alpha_m: f64,
    pub floor_constant: f64,
    pub radius_at_n_upper: f64,
}

const MAX_PLANNED_N: u64 = 1 << 62;

/// Sample budget to reach a confidence radius of `target_eps`.
pub fn required_samples(target_eps: f64, spec: &CriticClassSpec, order: Order, delta: f64) -> Result<SamplePlan> {
    if !(target_eps > 0.0 && target_eps.is_finite()) {
        return Err(Error::invalid(
            "target_eps",
            format!("must be finite and > 0, got {target_eps}"),
        ));
    }
    check_level("delta", delta)?;
    let radius = |n: u64| dv_ci_radius(n as usize, spec, order, delta, 0.0);
    // η = n^{-1/2} must stay below K.
    let mut lo = ((1.0 / (spec.k * spec.k)).floor() as u64).max(1);
    while radius(lo).is_err() {
        lo += 1;
    }
    let mut hi = lo;
    while radius(hi)? > target_eps {
        lo = hi;
        hi = hi.checked_mul(2).filter(|&h| h <= MAX_PLANNED_N).ok_or_else(|| {
            Error::Infeasible(format!(
                "radius stays above {target_eps} for every n <= 2^62 (C = {:.4e})",
                dv_constant(order, spec.m)
            ))
        })?;
    }
    if radius(lo)? <= target_eps {
        hi = lo;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if radius(mid)? <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let raw_floor = spec.d as f64 / (target_eps * target_eps);
    let nearest = raw_floor.round();
    let n_floor = if (raw_floor - nearest).abs() <= 1e-9 * raw_floor.max(1.0) {
        nearest
    } else {
        raw_floor.ceil()
    };
    Ok(SamplePlan {
        n_upper: hi,
        n_floor: n_floor as u64,
        target_eps,
        constant_c_alpha_m: dv_constant(order, spec.m),
        floor_constant: 1.0,
        radius_at_n_upper: radius(hi)?,
    })
}
