//! The statistics network `T_θ`: a small fully connected ReLU network with a
//! scalar output, exact reverse-mode parameter gradients and optional output
//! squashing / parameter-ball projection.
//!
//! Parameters are stored row-major per layer (`weights[out][in]`), which is
//! also the on-disk layout of a serialized critic.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::divergence::SampleSet;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_LAYER_SIZES: [usize; 4] = [1, 100, 100, 1];

/// Affine input map `x ↦ (x − shift) / scale`, applied before the first layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Mean/standard deviation of scalar inputs. Degenerate spread falls back to scale 1.
    pub fn fit_scalar(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd.is_finite() && sd > 1e-12 { sd } else { 1.0 };
        Standardization {
            shift: vec![mean],
            scale: vec![scale],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn weights_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &self.weights).expect("layer shape")
    }

    fn bias_view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.bias[..])
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CriticFile")]
pub struct CriticNetwork {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    clamp_bound: Option<f64>,
    param_radius: Option<f64>,
    seed: u64,
    standardization: Option<Standardization>,
}

/// Serialized form; validated into a [`CriticNetwork`] on load.
#[derive(Deserialize)]
struct CriticFile {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    clamp_bound: Option<f64>,
    param_radius: Option<f64>,
    seed: u64,
    standardization: Option<Standardization>,
}

impl TryFrom<CriticFile> for CriticNetwork {
    type Error = Error;

    fn try_from(f: CriticFile) -> Result<Self> {
        validate_sizes(&f.layer_sizes)?;
        validate_options(f.clamp_bound, f.param_radius)?;
        if f.layers.len() + 1 != f.layer_sizes.len() {
            return Err(Error::invalid("layers", "layer count does not match layer_sizes"));
        }
        for (i, layer) in f.layers.iter().enumerate() {
            let (cols, rows) = (f.layer_sizes[i], f.layer_sizes[i + 1]);
            if layer.rows != rows
                || layer.cols != cols
                || layer.weights.len() != rows * cols
                || layer.bias.len() != rows
            {
                return Err(Error::invalid("layers", format!("layer {i} has inconsistent shape")));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid("layers", format!("layer {i} has non-finite parameters")));
            }
        }
        if let Some(s) = &f.standardization {
            let dim = f.layer_sizes[0];
            if s.shift.len() != dim || s.scale.len() != dim || s.scale.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("standardization", "shape or scale invalid"));
            }
        }
        Ok(CriticNetwork {
            layer_sizes: f.layer_sizes,
            layers: f.layers,
            clamp_bound: f.clamp_bound,
            param_radius: f.param_radius,
            seed: f.seed,
            standardization: f.standardization,
        })
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::invalid(
            "layer_sizes",
            "need at least an input and an output layer",
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("layer_sizes", "layer sizes must be positive"));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::invalid("layer_sizes", "the output layer must have size 1"));
    }
    Ok(())
}

fn validate_options(clamp_bound: Option<f64>, param_radius: Option<f64>) -> Result<()> {
    if let Some(m) = clamp_bound {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::invalid(
                "clamp_bound",
                format!("must be finite and > 0, got {m}"),
            ));
        }
    }
    if let Some(k) = param_radius {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(
                "param_radius",
                format!("must be finite and > 0, got {k}"),
            ));
        }
    }
    Ok(())
}

/// Gradient with the same per-layer shapes as the owning network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub layers: Vec<Layer>,
}

impl ParamGradient {
    pub fn zeros_like(net: &CriticNetwork) -> Self {
        ParamGradient {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    rows: l.rows,
                    cols: l.cols,
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Concatenation of all layers, weights before bias, in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&v| v == 0.0)
    }
}

/// Intermediate values of a batched forward pass, kept for the backward pass.
pub(crate) struct ForwardCache {
    /// Input to each layer (after standardization / ReLU), `batch × fan_in`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Array2<f64>>,
    /// Unsquashed network output.
    raw: Array1<f64>,
    pub(crate) output: Array1<f64>,
}

impl CriticNetwork {
    /// Seeded Glorot-uniform weights (`U[−a, a]`, `a = √(6/(fan_in+fan_out))`), zero biases.
    pub fn init(seed: u64, layer_sizes: &[usize], clamp_bound: Option<f64>, param_radius: Option<f64>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        validate_options(clamp_bound, param_radius)?;
        let mut rng = rng::stream(seed, &[0xc817]);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
                Layer {
                    rows: fan_out,
                    cols: fan_in,
                    weights: (0..fan_in * fan_out).map(|_| rng.sample(dist)).collect(),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        let mut net = CriticNetwork {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            clamp_bound,
            param_radius,
            seed,
            standardization: None,
        };
        net.project();
        Ok(net)
    }

    /// Builds a network from explicit layers, e.g. a hand-set linear critic.
    pub fn from_layers(layers: Vec<Layer>, clamp_bound: Option<f64>, param_radius: Option<f64>) -> Result<Self> {
        let mut layer_sizes: Vec<usize> = layers.first().map(|l| vec![l.cols]).unwrap_or_default();
        layer_sizes.extend(layers.iter().map(|l| l.rows));
        CriticNetwork::try_from(CriticFile {
            layer_sizes,
            layers,
            clamp_bound,
            param_radius,
            seed: 0,
            standardization: None,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn clamp_bound(&self) -> Option<f64> {
        self.clamp_bound
    }

    pub fn param_radius(&self) -> Option<f64> {
        self.param_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn set_standardization(&mut self, s: Option<Standardization>) -> Result<()> {
        if let Some(s) = &s {
            let dim = self.input_dim();
            if s.shift.len() != dim || s.scale.len() != dim || s.scale.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("standardization", "shape or scale invalid"));
            }
        }
        self.standardization = s;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn param_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `T_θ(x)` for a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.forward_cached(batch).output[0])
    }

    /// `T_θ` at each scalar input; requires a one-dimensional input layer.
    pub fn forward_scalars(&self, xs: &[f64]) -> Result<Vec<f64>> {
        self.require_scalar_input()?;
        let batch = ArrayView2::from_shape((xs.len(), 1), xs).expect("column shape");
        Ok(self.forward_cached(batch).output.to_vec())
    }

    fn require_scalar_input(&self) -> Result<()> {
        if self.input_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: self.input_dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        let mut a = x.to_owned();
        if let Some(s) = &self.standardization {
            for (mut col, (&shift, &scale)) in a.axis_iter_mut(Axis(1)).zip(s.shift.iter().zip(&s.scale)) {
                col.mapv_inplace(|v| (v - shift) / scale);
            }
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights_view().t());
            z += &layer.bias_view();
            inputs.push(a);
            if i == last {
                a = z;
            } else {
                a = z.mapv(|v| v.max(0.0));
                pre_activations.push(z);
            }
        }
        let raw = a.index_axis_move(Axis(1), 0);
        let output = match self.clamp_bound {
            Some(m) => raw.mapv(|v| m * (v / m).tanh()),
            None => raw.clone(),
        };
        ForwardCache {
            inputs,
            pre_activations,
            raw,
            output,
        }
    }

    /// Reverse accumulation of `∇_θ Σᵢ wᵢ T_θ(xᵢ)` through a cached forward pass.
    pub(crate) fn backward(&self, cache: &ForwardCache, weights: &[f64]) -> ParamGradient {
        let mut delta = Array1::from(weights.to_vec());
        if let Some(m) = self.clamp_bound {
            delta.zip_mut_with(&cache.raw, |d, &r| {
                let t = (r / m).tanh();
                *d *= 1.0 - t * t;
            });
        }
        let mut delta = delta.insert_axis(Axis(1));
        let mut grads = vec![None; self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&cache.inputs[i]);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights_view());
                // ReLU'(0) is taken as 0.
                back.zip_mut_with(&cache.pre_activations[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            let layer = &self.layers[i];
            grads[i] = Some(Layer {
                rows: layer.rows,
                cols: layer.cols,
                weights: gw.iter().copied().collect(),
                bias: gb.to_vec(),
            });
        }
        ParamGradient {
            layers: grads.into_iter().map(Option::unwrap).collect(),
        }
    }

    /// `∇_θ Σᵢ wᵢ T_θ(xᵢ)` over scalar inputs.
    pub fn weighted_param_gradient(&self, inputs: &SampleSet, weights: &[f64]) -> Result<ParamGradient> {
        self.weighted_param_gradient_slice(inputs.values(), weights)
    }

    pub fn weighted_param_gradient_slice(&self, inputs: &[f64], weights: &[f64]) -> Result<ParamGradient> {
        self.require_scalar_input()?;
        if inputs.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: weights.len(),
            });
        }
        let batch = ArrayView2::from_shape((inputs.len(), 1), inputs).expect("column shape");
        let cache = self.forward_cached(batch);
        Ok(self.backward(&cache, weights))
    }

    /// `θ ← θ + step · grad`, then projection onto the radius-K ball if configured.
    pub fn apply_update(&mut self, grad: &ParamGradient, step: f64) -> Result<()> {
        if grad.layers.len() != self.layers.len()
            || grad
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.rows != l.rows || g.cols != l.cols || g.weights.len() != l.weights.len())
        {
            return Err(Error::invalid("grad", "gradient shape does not match the network"));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, dw) in layer.weights.iter_mut().zip(&g.weights) {
                *w += step * dw;
            }
            for (b, db) in layer.bias.iter_mut().zip(&g.bias) {
                *b += step * db;
            }
        }
        self.project();
        Ok(())
    }

    fn project(&mut self) {
        let Some(k) = self.param_radius else { return };
        let norm = self.param_norm();
        if norm > k {
            let s = k / norm;
            for layer in &mut self.layers {
                layer
                    .weights
                    .iter_mut()
                    .chain(layer.bias.iter_mut())
                    .for_each(|v| *v *= s);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}


#[cfg(test)]
mod gradient_check {
    use super::*;
    use rand::Rng;

    /// Central differences of `Σ wᵢ T(xᵢ)`, evaluated through `forward` only.
    fn finite_difference(net: &CriticNetwork, xs: &[f64], ws: &[f64], h: f64) -> Vec<f64> {
        let base = net.params_flat();
        let objective = |params: &[f64]| {
            let mut probe = net.clone();
            probe.set_params_flat(params).unwrap();
            xs.iter()
                .zip(ws)
                .map(|(&x, &w)| w * probe.forward(&[x]).unwrap())
                .sum::<f64>()
        };
        (0..base.len())
            .map(|k| {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[k] += h;
                minus[k] -= h;
                (objective(&plus) - objective(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn matches_finite_differences_small() {
        let mut rng = rng::stream(99, &[]);
        for case in 0..5 {
            let net =
                CriticNetwork::init(case, &[1, 4, 1], if case % 2 == 0 { Some(1.5) } else { None }, None).unwrap();
            let xs: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ws: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let analytic = net.weighted_param_gradient_slice(&xs, &ws).unwrap().flatten();
            let numeric = finite_difference(&net, &xs, &ws, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() <= 1e-4 * a.abs().max(n.abs()).max(1e-3), "{a} vs {n}");
            }
        }
    }
}
