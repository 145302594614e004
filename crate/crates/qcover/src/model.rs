//! Common model interface over the two regressor families, so the training
//! loop and information-geometry code stay family-agnostic.

use crate::circuits::{self, ArchitectureSpec, CircuitError, ParameterSet};
use crate::classical_nn::{
    init_mlp, mlp_backward, mlp_forward, mlp_grad_prediction, mlp_param_count, MlpError, MlpParams,
    MlpSpec,
};
use crate::datapipe::Sample;
use crate::gradients::{
    grad_prediction, grad_regularized_batch, shot_grad_sample, Gradient,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("parameter family does not match model family")]
    FamilyMismatch,
    #[error("shot-noise mode is not defined for the classical model")]
    ShotsOnClassical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Qnn(ArchitectureSpec),
    Mlp(MlpSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Qnn(ParameterSet),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn n_features(&self) -> usize {
        match self {
            ModelSpec::Qnn(s) => s.n_qubits,
            ModelSpec::Mlp(s) => s.input_width(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::Qnn(s) => s.param_count(),
            ModelSpec::Mlp(s) => mlp_param_count(s),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Qnn(s) => format!("qnn-{}-n{}-e{}-v{}", s.kind.label(), s.n_qubits, s.n_enc, s.n_var),
            ModelSpec::Mlp(s) => {
                let sizes: Vec<String> = s.layer_sizes.iter().map(|v| v.to_string()).collect();
                format!("mlp-{}", sizes.join("x"))
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelSpec::Qnn(s) => s.validate().map_err(Into::into),
            ModelSpec::Mlp(s) => s.validate().map_err(Into::into),
        }
    }

    /// Training initialization (family-specific documented distributions).
    pub fn init(&self, seed: u64) -> Result<ModelParams, ModelError> {
        Ok(match self {
            ModelSpec::Qnn(s) => ModelParams::Qnn(circuits::init_params(s, seed)?),
            ModelSpec::Mlp(s) => ModelParams::Mlp(init_mlp(s, seed)),
        })
    }

    /// Draw from the information-geometry prior: circuit angles U[0, 2pi),
    /// readout/MLP weights U[-1, 1], biases U[0, 1].
    pub fn prior_draw(&self, rng: &mut ChaCha8Rng) -> ModelParams {
        match self {
            ModelSpec::Qnn(s) => {
                let mut p = ParameterSet::zeros(s);
                for i in 0..s.n_circuit_angles() {
                    let v = rng.gen_range(0.0..std::f64::consts::TAU);
                    p.set_circuit_angle(s, i, v);
                }
                for w in &mut p.weights {
                    *w = rng.gen_range(-1.0..1.0);
                }
                p.bias = rng.gen_range(0.0..1.0);
                ModelParams::Qnn(p)
            }
            ModelSpec::Mlp(s) => {
                let mut p = MlpParams::zeros(s);
                for w in &mut p.weights {
                    for v in w.iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                }
                for b in &mut p.biases {
                    for v in b.iter_mut() {
                        *v = rng.gen_range(0.0..1.0);
                    }
                }
                ModelParams::Mlp(p)
            }
        }
    }

    pub fn forward(&self, params: &ModelParams, x: &[f64]) -> Result<f64, ModelError> {
        match (self, params) {
            (ModelSpec::Qnn(s), ModelParams::Qnn(p)) => Ok(circuits::forward(s, p, x)?),
            (ModelSpec::Mlp(s), ModelParams::Mlp(p)) => Ok(mlp_forward(s, p, x)?),
            _ => Err(ModelError::FamilyMismatch),
        }
    }

    /// Prediction and flat gradient of the prediction; FIM building block.
    pub fn grad_prediction_flat(
        &self,
        params: &ModelParams,
        x: &[f64],
    ) -> Result<(f64, Vec<f64>), ModelError> {
        match (self, params) {
            (ModelSpec::Qnn(s), ModelParams::Qnn(p)) => {
                let (f, g) = grad_prediction(s, p, x)?;
                Ok((f, g.to_flat()))
            }
            (ModelSpec::Mlp(s), ModelParams::Mlp(p)) => {
                let (f, g) = mlp_grad_prediction(s, p, x)?;
                Ok((f, g.to_flat()))
            }
            _ => Err(ModelError::FamilyMismatch),
        }
    }

    /// Noiseless batch loss (MSE + lambda * variance term where defined) and
    /// its flat gradient. The variance term is identically zero for the MLP.
    pub fn loss_grad(
        &self,
        params: &ModelParams,
        batch: &[Sample],
        lambda: f64,
    ) -> Result<LossParts, ModelError> {
        match (self, params) {
            (ModelSpec::Qnn(s), ModelParams::Qnn(p)) => {
                let (mse, mpv, g) = grad_regularized_batch(s, p, batch, lambda)?;
                Ok(LossParts { mse, mpv, grad: g.to_flat() })
            }
            (ModelSpec::Mlp(s), ModelParams::Mlp(p)) => {
                let (mse, g) = mlp_backward(s, p, batch)?;
                Ok(LossParts { mse, mpv: 0.0, grad: g.to_flat() })
            }
            _ => Err(ModelError::FamilyMismatch),
        }
    }

    /// Shot-noise batch loss estimate and gradient. `seed` already encodes
    /// run/epoch/step; per-sample sub-seeds are derived inside.
    pub fn shot_loss_grad(
        &self,
        params: &ModelParams,
        batch: &[Sample],
        lambda: f64,
        n_shots: usize,
        seed: u64,
    ) -> Result<LossParts, ModelError> {
        match (self, params) {
            (ModelSpec::Qnn(s), ModelParams::Qnn(p)) => {
                let mut mse = 0.0;
                let mut mpv = 0.0;
                let mut grad = Gradient::zeros(s);
                for (k, sample) in batch.iter().enumerate() {
                    let sub = crate::gradients::derive_seed(seed, &[k as u64]);
                    let (r2, var, g) = shot_grad_sample(s, p, sample, lambda, n_shots, sub)?;
                    mse += r2;
                    mpv += var;
                    grad.add_scaled(&g, 1.0);
                }
                let inv = 1.0 / batch.len() as f64;
                grad.scale(inv);
                Ok(LossParts { mse: mse * inv, mpv: mpv * inv, grad: grad.to_flat() })
            }
            (ModelSpec::Mlp(_), _) => Err(ModelError::ShotsOnClassical),
            _ => Err(ModelError::FamilyMismatch),
        }
    }

    pub fn params_to_flat(&self, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
        match (self, params) {
            (ModelSpec::Qnn(_), ModelParams::Qnn(p)) => Ok(p.to_flat()),
            (ModelSpec::Mlp(_), ModelParams::Mlp(p)) => Ok(p.to_flat()),
            _ => Err(ModelError::FamilyMismatch),
        }
    }

    pub fn params_from_flat(&self, flat: &[f64]) -> Result<ModelParams, ModelError> {
        Ok(match self {
            ModelSpec::Qnn(s) => ModelParams::Qnn(ParameterSet::from_flat(s, flat)?),
            ModelSpec::Mlp(s) => ModelParams::Mlp(MlpParams::from_flat(s, flat)?),
        })
    }
}

/// Loss pieces from one batch evaluation. Total objective is
/// mse + lambda * mpv; the parts are kept separate for tracing.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub mse: f64,
    pub mpv: f64,
    pub grad: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::ArchitectureKind;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn qnn() -> ModelSpec {
        ModelSpec::Qnn(ArchitectureSpec::new(ArchitectureKind::Zzxy, 3, 1, 1).unwrap())
    }

    fn mlp() -> ModelSpec {
        ModelSpec::Mlp(MlpSpec::tanh(vec![3, 4, 1]).unwrap())
    }

    #[test]
    fn flat_roundtrip_both_families() {
        for spec in [qnn(), mlp()] {
            let p = spec.init(7).unwrap();
            let flat = spec.params_to_flat(&p).unwrap();
            assert_eq!(flat.len(), spec.param_count());
            let back = spec.params_from_flat(&flat).unwrap();
            assert_eq!(spec.params_to_flat(&back).unwrap(), flat);
        }
    }

    #[test]
    fn family_mismatch_rejected() {
        let q = qnn();
        let p = mlp().init(1).unwrap();
        assert!(matches!(q.forward(&p, &[0.0; 3]), Err(ModelError::FamilyMismatch)));
    }

    #[test]
    fn loss_grad_agrees_with_forward_residuals() {
        for spec in [qnn(), mlp()] {
            let p = spec.init(3).unwrap();
            let batch = vec![
                Sample { x: vec![0.2, 1.1, 2.0], y: 0.3 },
                Sample { x: vec![1.5, 0.4, 0.8], y: 0.6 },
            ];
            let parts = spec.loss_grad(&p, &batch, 0.0).unwrap();
            let direct: f64 = batch
                .iter()
                .map(|s| {
                    let r = spec.forward(&p, &s.x).unwrap() - s.y;
                    r * r
                })
                .sum::<f64>()
                / batch.len() as f64;
            assert_abs_diff_eq!(parts.mse, direct, epsilon = 1e-12);
            assert_eq!(parts.grad.len(), spec.param_count());
        }
    }

    #[test]
    fn prior_draw_ranges() {
        let spec = qnn();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        match spec.prior_draw(&mut rng) {
            ModelParams::Qnn(p) => {
                assert!(p.weights.iter().all(|w| (-1.0..1.0).contains(w)));
                assert!((0.0..1.0).contains(&p.bias));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn shots_rejected_for_mlp() {
        let spec = mlp();
        let p = spec.init(1).unwrap();
        let batch = vec![Sample { x: vec![0.0; 3], y: 0.0 }];
        assert!(matches!(
            spec.shot_loss_grad(&p, &batch, 0.0, 10, 1),
            Err(ModelError::ShotsOnClassical)
        ));
    }
}
