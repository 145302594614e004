//! Evaluation metrics, Fisher-information / effective-dimension diagnostics,
//! shot-noise variance, and training-dynamics statistics.

use crate::circuits::ArchitectureSpec;
use crate::datapipe::Sample;
use crate::gradients::{derive_seed, variance_quadratic_form};
use crate::model::{ModelError, ModelSpec};
use crate::statevector::SimError;
use crate::training::RunRecord;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("length mismatch: {a} predictions vs {b} truths")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least 2 points, got {0}")]
    TooFew(usize),
    #[error("truths have zero variance; R^2 undefined")]
    ZeroVariance,
    #[error("empty dataset")]
    Empty,
    #[error("non-finite determinant term at parameter draw {draw}")]
    NonFinite { draw: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub r2: f64,
    pub hellinger: f64,
    pub wasserstein: f64,
}

pub const HELLINGER_BINS: usize = 100;

/// Normalized 100-bin histogram of values clamped to [0, 1].
pub fn histogram(values: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; HELLINGER_BINS];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * HELLINGER_BINS as f64) as usize).min(HELLINGER_BINS - 1);
        h[b] += 1.0;
    }
    let total = values.len() as f64;
    h.iter_mut().for_each(|c| *c /= total);
    h
}

/// Hellinger distance between two normalized histograms.
pub fn hellinger_from_histograms(p: &[f64], q: &[f64]) -> f64 {
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    (1.0 - bc.min(1.0)).max(0.0).sqrt()
}

/// Wasserstein-1 between two equal-size empirical distributions: mean
/// absolute difference of sorted samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// MSE, R^2, and distribution distances between predictions and truths.
/// Distribution metrics assume values in [0, 1] (clc scale).
pub fn metrics(predictions: &[f64], truths: &[f64]) -> Result<MetricsReport, AnalysisError> {
    if predictions.len() != truths.len() {
        return Err(AnalysisError::LengthMismatch { a: predictions.len(), b: truths.len() });
    }
    if predictions.len() < 2 {
        return Err(AnalysisError::TooFew(predictions.len()));
    }
    let n = truths.len() as f64;
    let mse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let mean = truths.iter().sum::<f64>() / n;
    let var = truths.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(MetricsReport {
        mse,
        r2: 1.0 - mse / var,
        hellinger: hellinger_from_histograms(&histogram(predictions), &histogram(truths)),
        wasserstein: wasserstein1(predictions, truths),
    })
}

#[derive(Debug, Clone)]
pub struct FimResult {
    /// D x D symmetric matrix.
    pub fim: DMatrix<f64>,
    /// Eigenvalues, descending.
    pub spectrum: Vec<f64>,
    pub trace: f64,
}

/// Empirical FIM: mean outer product of prediction gradients over the full
/// parameter vector (sigma prefactor 1).
pub fn fim(
    model: &ModelSpec,
    params: &crate::model::ModelParams,
    dataset: &[Sample],
) -> Result<FimResult, AnalysisError> {
    if dataset.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let d = model.param_count();
    let mut f = DMatrix::<f64>::zeros(d, d);
    for s in dataset {
        let (_, g) = model.grad_prediction_flat(params, &s.x)?;
        for j in 0..d {
            if g[j] == 0.0 {
                continue;
            }
            for k in j..d {
                f[(j, k)] += g[j] * g[k];
            }
        }
    }
    let inv = 1.0 / dataset.len() as f64;
    for j in 0..d {
        for k in j..d {
            let v = f[(j, k)] * inv;
            f[(j, k)] = v;
            f[(k, j)] = v;
        }
    }
    let trace = f.trace();
    let mut spectrum: Vec<f64> = f.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));
    Ok(FimResult { fim: f, spectrum, trace })
}

/// FIMs at M prior parameter draws; shared between the spectra report and
/// the effective-dimension estimate.
pub struct FimEnsemble {
    pub dim: usize,
    pub fims: Vec<FimResult>,
}

pub fn fim_ensemble(
    model: &ModelSpec,
    dataset: &[Sample],
    m_draws: usize,
    seed: u64,
) -> Result<FimEnsemble, AnalysisError> {
    let mut fims = Vec::with_capacity(m_draws);
    for m in 0..m_draws {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xf13, m as u64]));
        let params = model.prior_draw(&mut rng);
        fims.push(fim(model, &params, dataset)?);
    }
    Ok(FimEnsemble { dim: model.param_count(), fims })
}

/// c = n_data / (2 pi log n_data).
pub fn effective_dimension_constant(n_data: f64) -> f64 {
    n_data / (std::f64::consts::TAU * n_data.ln())
}

/// Normalized effective dimension from a FIM ensemble:
/// d_hat = 2 log( mean_m sqrt det(I + c F_hat(theta_m)) ) / (D log c),
/// with F_hat = D F / (mean trace), the half-log-dets via symmetric
/// eigendecomposition, and the outer mean via a max-shifted log-sum-exp.
pub fn effective_dimension_from_ensemble(
    ens: &FimEnsemble,
    n_data: f64,
) -> Result<f64, AnalysisError> {
    assert!(ens.fims.len() >= 2, "need M >= 2 draws");
    assert!(n_data > std::f64::consts::E * std::f64::consts::E, "need n_data > e^2");
    let d = ens.dim as f64;
    let c = effective_dimension_constant(n_data);
    let mean_trace = ens.fims.iter().map(|f| f.trace).sum::<f64>() / ens.fims.len() as f64;
    if mean_trace == 0.0 {
        // All-zero FIMs: det(I) = 1, d_hat = 0.
        return Ok(0.0);
    }
    let norm = d / mean_trace;
    let mut half_logdets = Vec::with_capacity(ens.fims.len());
    for (m, f) in ens.fims.iter().enumerate() {
        // Symmetrize before eigendecomposition to kill round-off asymmetry.
        let sym = (&f.fim + f.fim.transpose()) * 0.5;
        let eigs = sym.symmetric_eigen().eigenvalues;
        let mut hld = 0.0;
        for &lambda in eigs.iter() {
            // PSD up to round-off; clamp tiny negatives.
            hld += 0.5 * (1.0 + c * norm * lambda.max(0.0)).ln();
        }
        if !hld.is_finite() {
            return Err(AnalysisError::NonFinite { draw: m });
        }
        half_logdets.push(hld);
    }
    let max = half_logdets.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let log_mean = max
        + (half_logdets.iter().map(|&v| (v - max).exp()).sum::<f64>()
            / half_logdets.len() as f64)
            .ln();
    Ok(2.0 * log_mean / (d * c.ln()))
}

/// Monte Carlo normalized effective dimension over M prior draws.
pub fn effective_dimension(
    model: &ModelSpec,
    dataset: &[Sample],
    m_draws: usize,
    n_data: f64,
    seed: u64,
) -> Result<f64, AnalysisError> {
    let ens = fim_ensemble(model, dataset, m_draws, seed)?;
    effective_dimension_from_ensemble(&ens, n_data)
}

/// Exact shot-noise variance of the prediction at one input:
/// sum_{m,n} w_m w_n Cov[z_m, z_n] / n_shots.
pub fn prediction_variance(
    spec: &ArchitectureSpec,
    params: &crate::circuits::ParameterSet,
    x: &[f64],
    n_shots: usize,
) -> Result<f64, AnalysisError> {
    let state = crate::circuits::run_circuit(spec, params, x, None)
        .map_err(|e| AnalysisError::Model(ModelError::Circuit(e)))?;
    let (z, zz) = state.z_zz_expectations();
    Ok(variance_quadratic_form(&params.weights, &z, &zz, n_shots))
}

/// Dataset mean of `prediction_variance`.
pub fn mpv(
    spec: &ArchitectureSpec,
    params: &crate::circuits::ParameterSet,
    dataset: &[Sample],
    n_shots: usize,
) -> Result<f64, AnalysisError> {
    if dataset.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut acc = 0.0;
    for s in dataset {
        acc += prediction_variance(spec, params, &s.x, n_shots)?;
    }
    Ok(acc / dataset.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    /// (optimizer step, mean over walkers of |theta(t) - theta(0)|^2).
    pub msd: Vec<(u64, f64)>,
    /// Mean of MSD over snapshot times.
    pub integrated_msd: f64,
    /// Mean over walkers of tr C, C = (1/T) Theta^T Theta with Theta the
    /// time-centered snapshot matrix.
    pub mean_correlation_trace: f64,
    /// Mean over epochs of the cross-walker std of the train MSE.
    pub loss_spread: f64,
    /// Mean over coordinates of the cross-walker std of the final parameters.
    pub final_param_spread: f64,
}

/// Ensemble statistics of parameter-space motion during training. Walkers
/// must share snapshot cadence and epoch count.
pub fn training_dynamics(records: &[RunRecord]) -> Result<DynamicsReport, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let steps: Vec<u64> = records[0].snapshots.iter().map(|(s, _)| *s).collect();
    for r in records {
        let s: Vec<u64> = r.snapshots.iter().map(|(s, _)| *s).collect();
        if s != steps {
            return Err(AnalysisError::LengthMismatch { a: s.len(), b: steps.len() });
        }
    }
    let n_walkers = records.len() as f64;

    let msd: Vec<(u64, f64)> = steps
        .iter()
        .enumerate()
        .map(|(t, &step)| {
            let mean = records
                .iter()
                .map(|r| {
                    r.snapshots[t]
                        .1
                        .iter()
                        .zip(&r.snapshots[0].1)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / n_walkers;
            (step, mean)
        })
        .collect();
    let integrated_msd = msd.iter().map(|(_, v)| v).sum::<f64>() / msd.len() as f64;

    let mean_correlation_trace = records
        .iter()
        .map(|r| {
            let t_len = r.snapshots.len() as f64;
            let dim = r.snapshots[0].1.len();
            let mut mean = vec![0.0; dim];
            for (_, snap) in &r.snapshots {
                for (m, v) in mean.iter_mut().zip(snap) {
                    *m += v / t_len;
                }
            }
            let mut tr = 0.0;
            for (_, snap) in &r.snapshots {
                for (v, m) in snap.iter().zip(&mean) {
                    tr += (v - m) * (v - m);
                }
            }
            tr / t_len
        })
        .sum::<f64>()
        / n_walkers;

    let n_epochs = records[0].epochs.len();
    let loss_spread = if records.len() >= 2 && n_epochs > 0 {
        (0..n_epochs)
            .map(|e| {
                let vals: Vec<f64> = records.iter().map(|r| r.epochs[e].train_mse).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64)
                    .sqrt()
            })
            .sum::<f64>()
            / n_epochs as f64
    } else {
        0.0
    };

    let dim = records[0].final_params.len();
    let final_param_spread = if records.len() >= 2 {
        (0..dim)
            .map(|j| {
                let vals: Vec<f64> = records.iter().map(|r| r.final_params[j]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64)
                    .sqrt()
            })
            .sum::<f64>()
            / dim as f64
    } else {
        0.0
    };

    Ok(DynamicsReport { msd, integrated_msd, mean_correlation_trace, loss_spread, final_param_spread })
}
