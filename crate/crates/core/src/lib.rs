//! Auditing Rényi differential privacy claims from black-box observations.
//!
//! The crate estimates Rényi divergence between two sample sets (typically the
//! canary losses of models trained with and without a canary record) by
//! training a small critic network on the Donsker–Varadhan style variational
//! objective. Estimates are paired with finite-sample confidence bounds and
//! compared against a claimed guarantee expressed as RDP, (ε, δ)-DP or μ-GDP.
//!
//! Module map:
//!
//! - [`divergence`]: closed-form, plug-in and quadrature Rényi divergences.
//! - [`critic`]: the fully connected statistics network and its gradients.
//! - [`dv`]: variational estimator training with EMA-corrected gradients.
//! - [`bounds`]: Markov, Hoeffding and covering-number confidence bounds.
//! - [`accounting`]: conversions between RDP, (ε, δ)-DP and μ-GDP.
//! - [`mechanisms`]: Gaussian/Bernoulli samplers and a miniature DP-SGD.
//! - [`audit`]: black-box audit orchestration, loss files and reports.
//! - [`minimax`]: constructive checks of the packing lower-bound instance.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod audit;
pub mod bounds;
pub mod critic;
pub mod divergence;
pub mod dv;
mod error;
pub mod mechanisms;
pub mod minimax;
pub mod rng;

pub use error::{Error, Result};
