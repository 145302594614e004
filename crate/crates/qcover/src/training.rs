//! Adam-based mini-batch training for both model families, noiseless or
//! finite-shot, with optional variance regularization, ensembles, and
//! train-size sweeps.

use crate::datapipe::Sample;
use crate::gradients::derive_seed;
use crate::model::{LossParts, ModelError, ModelSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("batch_size {batch} exceeds dataset size {n}")]
    BatchTooLarge { batch: usize, n: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss {loss:.3e} vs initial {initial:.3e}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Optional lambda schedule; constant by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSchedule {
    Constant,
    /// Linear ramp from `lambda` at epoch 0 to `final_lambda` at the last
    /// epoch.
    Linear { final_lambda: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Constant
    }
}

fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    /// None = noiseless (infinite shots).
    #[serde(default)]
    pub n_shots: Option<usize>,
    /// Variance-regularization strength.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub lambda_schedule: LambdaSchedule,
    pub seed: u64,
    /// Initialization seed; defaults to `seed`. Ensembles vary this while
    /// keeping the data order identical across walkers.
    #[serde(default)]
    pub init_seed: Option<u64>,
    /// Parameter snapshot cadence in optimizer steps; 0 = initial and final
    /// only.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl TrainConfig {
    pub fn validate(&self, n_samples: usize) -> Result<(), TrainError> {
        if self.lambda < 0.0 {
            return Err(TrainError::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
        }
        if n_samples == 0 {
            return Err(TrainError::EmptyDataset);
        }
        if self.batch_size > n_samples {
            return Err(TrainError::BatchTooLarge { batch: self.batch_size, n: n_samples });
        }
        Ok(())
    }

    fn lambda_at(&self, epoch: usize) -> f64 {
        match self.lambda_schedule {
            LambdaSchedule::Constant => self.lambda,
            LambdaSchedule::Linear { final_lambda } => {
                if self.epochs <= 1 {
                    self.lambda
                } else {
                    let t = epoch as f64 / (self.epochs - 1) as f64;
                    self.lambda + t * (final_lambda - self.lambda)
                }
            }
        }
    }
}

/// Standard bias-corrected Adam (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

/// One Adam update, in place on `params`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grad[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    /// Mean of the per-batch training-loss estimates over this epoch
    /// (sampled estimates in shot mode).
    pub train_mse: f64,
    /// Mean per-batch variance term (zero when lambda = 0 and noiseless).
    pub mpv: f64,
    /// Exact test MSE when a test set was supplied.
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub model_label: String,
    pub config_hash: String,
    pub initial_loss: f64,
    pub epochs: Vec<EpochStat>,
    /// (optimizer step, flat parameters); always includes step 0 and the
    /// final step.
    pub snapshots: Vec<(u64, Vec<f64>)>,
    pub final_params: Vec<f64>,
    /// Exact (noiseless) train MSE of the final parameters.
    pub final_train_mse: f64,
    pub final_test_mse: Option<f64>,
    pub wall_time_secs: f64,
}

/// Hash of the canonical JSON of any serializable config.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let mut h = Sha256::new();
    h.update(&json);
    format!("{:x}", h.finalize())
}

fn exact_mse(model: &ModelSpec, flat: &[f64], data: &[Sample]) -> Result<f64, ModelError> {
    let params = model.params_from_flat(flat)?;
    let mut acc = 0.0;
    for s in data {
        let r = model.forward(&params, &s.x)? - s.y;
        acc += r * r;
    }
    Ok(acc / data.len() as f64)
}

/// Train `model` on `dataset`; optional exact test-MSE tracking on `test`.
pub fn train(
    model: &ModelSpec,
    dataset: &[Sample],
    test: Option<&[Sample]>,
    config: &TrainConfig,
) -> Result<RunRecord, TrainError> {
    config.validate(dataset.len())?;
    model.validate()?;
    let start = std::time::Instant::now();
    let init_seed = config.init_seed.unwrap_or(config.seed);
    let params = model.init(init_seed)?;
    let mut flat = model.params_to_flat(&params)?;
    let mut adam = AdamState::new(flat.len());
    let mut snapshots = vec![(0u64, flat.clone())];

    let eval_loss = |flat: &[f64], lambda: f64| -> Result<LossParts, ModelError> {
        let p = model.params_from_flat(flat)?;
        model.loss_grad(&p, dataset, lambda)
    };
    let initial_parts = eval_loss(&flat, config.lambda_at(0))?;
    let initial_loss = initial_parts.mse + config.lambda_at(0) * initial_parts.mpv;

    let n_batches = dataset.len() / config.batch_size;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    let mut over_budget_streak = 0usize;

    for epoch in 0..config.epochs {
        let lambda = config.lambda_at(epoch);
        // Data order depends only on the run seed, not the init seed, so
        // ensemble walkers see identical batches.
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0xda7a, epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_mse = 0.0;
        let mut epoch_mpv = 0.0;
        let mut batch_buf: Vec<Sample> = Vec::with_capacity(config.batch_size);
        for b in 0..n_batches {
            batch_buf.clear();
            batch_buf.extend(
                order[b * config.batch_size..(b + 1) * config.batch_size]
                    .iter()
                    .map(|&i| dataset[i].clone()),
            );
            let p = model.params_from_flat(&flat)?;
            let parts = match config.n_shots {
                None => model.loss_grad(&p, &batch_buf, lambda)?,
                Some(n_shots) => {
                    let seed = derive_seed(config.seed, &[0x5407, epoch as u64, b as u64]);
                    model.shot_loss_grad(&p, &batch_buf, lambda, n_shots, seed)?
                }
            };
            epoch_mse += parts.mse;
            epoch_mpv += parts.mpv;
            adam_step(&mut adam, &mut flat, &parts.grad, config.learning_rate);
            step += 1;
            if config.snapshot_every > 0 && step % config.snapshot_every as u64 == 0 {
                snapshots.push((step, flat.clone()));
            }
        }
        let train_mse = epoch_mse / n_batches as f64;
        let mpv = epoch_mpv / n_batches as f64;
        let loss = train_mse + lambda * mpv;
        let test_mse = match test {
            Some(ts) if !ts.is_empty() => Some(exact_mse(model, &flat, ts)?),
            _ => None,
        };
        epochs.push(EpochStat { epoch, train_mse, mpv, test_mse });

        if loss > 1e3 * initial_loss.max(f64::MIN_POSITIVE) {
            over_budget_streak += 1;
            if over_budget_streak >= 3 {
                return Err(TrainError::Diverged { epoch, loss, initial: initial_loss });
            }
        } else {
            over_budget_streak = 0;
        }
    }

    if snapshots.last().map(|(s, _)| *s) != Some(step) {
        snapshots.push((step, flat.clone()));
    }
    let final_train_mse = exact_mse(model, &flat, dataset)?;
    let final_test_mse = match test {
        Some(ts) if !ts.is_empty() => Some(exact_mse(model, &flat, ts)?),
        _ => None,
    };
    Ok(RunRecord {
        config: config.clone(),
        model_label: model.label(),
        config_hash: config_hash(&(model, config)),
        initial_loss,
        epochs,
        snapshots,
        final_params: flat,
        final_train_mse,
        final_test_mse,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// M independent runs ("walkers") differing only in the initialization seed;
/// identical data order enables paired comparisons.
pub fn train_ensemble(
    model: &ModelSpec,
    dataset: &[Sample],
    test: Option<&[Sample]>,
    config: &TrainConfig,
    n_walkers: usize,
) -> Result<Vec<RunRecord>, TrainError> {
    let mut out = Vec::with_capacity(n_walkers);
    for w in 0..n_walkers {
        let mut cfg = config.clone();
        cfg.init_seed = Some(derive_seed(config.init_seed.unwrap_or(config.seed), &[0x1417, w as u64]));
        out.push(train(model, dataset, test, &cfg)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub train_size: usize,
    pub repeat: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_r2: f64,
}

/// Seeded subsample of `size` indices from the pool.
pub fn subsample_indices(pool_len: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5b5a, size as u64]));
    idx.shuffle(&mut rng);
    idx.truncate(size);
    idx
}

/// Train at each size on a seeded subsample; evaluate on a held-out test set.
pub fn sweep_train_size(
    model: &ModelSpec,
    pool: &[Sample],
    test: &[Sample],
    sizes: &[usize],
    config: &TrainConfig,
    repeats: usize,
) -> Result<Vec<SweepRow>, TrainError> {
    if test.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let var_truth = {
        let mean = test.iter().map(|s| s.y).sum::<f64>() / test.len() as f64;
        test.iter().map(|s| (s.y - mean).powi(2)).sum::<f64>() / test.len() as f64
    };
    let mut rows = Vec::new();
    for &size in sizes {
        if size > pool.len() {
            return Err(TrainError::InvalidConfig(format!(
                "sweep size {size} exceeds pool {}",
                pool.len()
            )));
        }
        for repeat in 0..repeats {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(config.seed, &[0x5eed, repeat as u64]);
            cfg.init_seed = Some(derive_seed(cfg.seed, &[0x171]));
            let subset: Vec<Sample> = subsample_indices(pool.len(), size, cfg.seed)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            let record = train(model, &subset, Some(test), &cfg)?;
            let test_mse = record.final_test_mse.unwrap();
            rows.push(SweepRow {
                train_size: size,
                repeat,
                train_mse: record.final_train_mse,
                test_mse,
                test_r2: 1.0 - test_mse / var_truth,
            });
        }
    }
    Ok(rows)
}

/// Persist a run as JSON-lines (one epoch per line) plus a manifest.
pub fn save_run_record(dir: &Path, name: &str, record: &RunRecord) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.jsonl")))?);
    for e in &record.epochs {
        writeln!(f, "{}", serde_json::to_string(e)?)?;
    }
    let manifest = serde_json::json!({
        "model": record.model_label,
        "config": record.config,
        "config_hash": record.config_hash,
        "library_version": env!("CARGO_PKG_VERSION"),
        "mpv_convention": "nominal_shots=1",
        "initial_loss": record.initial_loss,
        "final_train_mse": record.final_train_mse,
        "final_test_mse": record.final_test_mse,
        "n_snapshots": record.snapshots.len(),
        "wall_time_secs": record.wall_time_secs,
    });
    std::fs::write(
        dir.join(format!("{name}.manifest.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    std::fs::write(
        dir.join(format!("{name}.params.json")),
        serde_json::to_string(&record.final_params)?,
    )?;
    std::fs::write(
        dir.join(format!("{name}.snapshots.json")),
        serde_json::to_string(&record.snapshots)?,
    )?;
    Ok(())
}
