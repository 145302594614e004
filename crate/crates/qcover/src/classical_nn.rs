//! Small fully-connected MLP baseline with backpropagation.
//!
//! Layouts mirror the classical reference nets: a handful of hidden layers,
//! tanh or leaky-ReLU activations, linear scalar output.

use crate::datapipe::Sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("layer_sizes needs at least input and output, got {0} entries")]
    TooFewLayers(usize),
    #[error("output width must be 1, got {0}")]
    OutputWidth(usize),
    #[error("zero-width layer at position {0}")]
    ZeroWidth(usize),
    #[error("{got} activations for {expected} hidden layers")]
    ActivationCount { got: usize, expected: usize },
    #[error("parameter shapes inconsistent with spec")]
    ShapeMismatch,
    #[error("input length {got}, expected {expected}")]
    InputLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu,
}

/// Negative slope of leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::LeakyRelu => {
                if v >= 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn deriv(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu => {
                if pre >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// Input width first, output width (1) last.
    pub layer_sizes: Vec<usize>,
    /// One activation per hidden layer; the output layer is linear.
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self, MlpError> {
        let s = Self { layer_sizes, activations };
        s.validate()?;
        Ok(s)
    }

    /// All-tanh net, the common layout.
    pub fn tanh(layer_sizes: Vec<usize>) -> Result<Self, MlpError> {
        let hidden = layer_sizes.len().saturating_sub(2);
        Self::new(layer_sizes, vec![Activation::Tanh; hidden])
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if self.layer_sizes.len() < 2 {
            return Err(MlpError::TooFewLayers(self.layer_sizes.len()));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&w| w == 0) {
            return Err(MlpError::ZeroWidth(pos));
        }
        let out = *self.layer_sizes.last().unwrap();
        if out != 1 {
            return Err(MlpError::OutputWidth(out));
        }
        let hidden = self.layer_sizes.len() - 2;
        if self.activations.len() != hidden {
            return Err(MlpError::ActivationCount { got: self.activations.len(), expected: hidden });
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }
}

/// Per-layer weights (row-major, out x in) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpParams {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..spec.n_layers() {
            weights.push(vec![0.0; spec.layer_sizes[l] * spec.layer_sizes[l + 1]]);
            biases.push(vec![0.0; spec.layer_sizes[l + 1]]);
        }
        Self { weights, biases }
    }

    pub fn check_shapes(&self, spec: &MlpSpec) -> Result<(), MlpError> {
        if self.weights.len() != spec.n_layers() || self.biases.len() != spec.n_layers() {
            return Err(MlpError::ShapeMismatch);
        }
        for l in 0..spec.n_layers() {
            if self.weights[l].len() != spec.layer_sizes[l] * spec.layer_sizes[l + 1]
                || self.biases[l].len() != spec.layer_sizes[l + 1]
            {
                return Err(MlpError::ShapeMismatch);
            }
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<Self, MlpError> {
        if flat.len() != mlp_param_count(spec) {
            return Err(MlpError::ShapeMismatch);
        }
        let mut p = Self::zeros(spec);
        let mut k = 0;
        for l in 0..spec.n_layers() {
            let nw = p.weights[l].len();
            p.weights[l].copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = p.biases[l].len();
            p.biases[l].copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(p)
    }

    pub fn add_scaled(&mut self, other: &MlpParams, factor: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub fn mlp_param_count(spec: &MlpSpec) -> usize {
    (0..spec.n_layers())
        .map(|l| spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1])
        .sum()
}

/// Glorot-style uniform init in +-sqrt(6 / (fan_in + fan_out)); biases zero.
pub fn init_mlp(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MlpParams::zeros(spec);
    for l in 0..spec.n_layers() {
        let bound = (6.0 / (spec.layer_sizes[l] + spec.layer_sizes[l + 1]) as f64).sqrt();
        for w in &mut p.weights[l] {
            *w = rng.gen_range(-bound..bound);
        }
    }
    p
}

struct ForwardTrace {
    /// Pre-activation vectors per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation vectors per layer (last entry = output).
    post: Vec<Vec<f64>>,
}

fn forward_trace(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> Result<ForwardTrace, MlpError> {
    params.check_shapes(spec)?;
    if x.len() != spec.input_width() {
        return Err(MlpError::InputLength { got: x.len(), expected: spec.input_width() });
    }
    let mut cur = x.to_vec();
    let mut pre = Vec::with_capacity(spec.n_layers());
    let mut post = Vec::with_capacity(spec.n_layers());
    for l in 0..spec.n_layers() {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let mut z = params.biases[l].clone();
        for o in 0..n_out {
            let row = &params.weights[l][o * n_in..(o + 1) * n_in];
            z[o] += row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>();
        }
        let a: Vec<f64> = if l + 1 < spec.n_layers() {
            let act = spec.activations[l];
            z.iter().map(|&v| act.eval(v)).collect()
        } else {
            z.clone() // linear output
        };
        pre.push(z);
        cur = a.clone();
        post.push(a);
    }
    Ok(ForwardTrace { pre, post })
}

pub fn mlp_forward(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> Result<f64, MlpError> {
    Ok(forward_trace(spec, params, x)?.post.last().unwrap()[0])
}

/// Gradient of the scalar output w.r.t. every parameter (reverse mode).
pub fn mlp_grad_prediction(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &[f64],
) -> Result<(f64, MlpParams), MlpError> {
    let trace = forward_trace(spec, params, x)?;
    let f = trace.post.last().unwrap()[0];
    let mut grad = MlpParams::zeros(spec);
    // delta = d f / d pre-activation of the current layer.
    let mut delta = vec![1.0f64];
    for l in (0..spec.n_layers()).rev() {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let input: &[f64] = if l == 0 { x } else { &trace.post[l - 1] };
        for o in 0..n_out {
            grad.biases[l][o] = delta[o];
            let row = &mut grad.weights[l][o * n_in..(o + 1) * n_in];
            for (gi, &v) in row.iter_mut().zip(input) {
                *gi = delta[o] * v;
            }
        }
        if l > 0 {
            let mut prev = vec![0.0; n_in];
            for (i, pv) in prev.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (o, d) in delta.iter().enumerate() {
                    acc += d * params.weights[l][o * n_in + i];
                }
                *pv = acc * spec.activations[l - 1].deriv(trace.pre[l - 1][i]);
            }
            delta = prev;
        }
    }
    Ok((f, grad))
}

/// Batch MSE and its exact gradient.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: &[Sample],
) -> Result<(f64, MlpParams), MlpError> {
    assert!(!batch.is_empty());
    let mut loss = 0.0;
    let mut grad = MlpParams::zeros(spec);
    for s in batch {
        let (f, g) = mlp_grad_prediction(spec, params, &s.x)?;
        let r = f - s.y;
        loss += r * r;
        grad.add_scaled(&g, 2.0 * r);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.scale(inv);
    Ok((loss * inv, grad))
}

/// Central-difference gradient of batch MSE; test oracle.
pub fn mlp_finite_diff(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: &[Sample],
    epsilon: f64,
) -> Result<MlpParams, MlpError> {
    let flat = params.to_flat();
    let mut grad = vec![0.0; flat.len()];
    let loss_of = |flat: &[f64]| -> Result<f64, MlpError> {
        let p = MlpParams::from_flat(spec, flat)?;
        let mut acc = 0.0;
        for s in batch {
            let r = mlp_forward(spec, &p, &s.x)? - s.y;
            acc += r * r;
        }
        Ok(acc / batch.len() as f64)
    };
    let mut work = flat.clone();
    for i in 0..flat.len() {
        work[i] = flat[i] + epsilon;
        let plus = loss_of(&work)?;
        work[i] = flat[i] - epsilon;
        let minus = loss_of(&work)?;
        work[i] = flat[i];
        grad[i] = (plus - minus) / (2.0 * epsilon);
    }
    MlpParams::from_flat(spec, &grad)
}
