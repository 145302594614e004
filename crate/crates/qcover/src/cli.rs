//! Config-driven command-line front end: data generation, baseline fitting,
//! training, sweeps, and analysis, each emitting machine-readable artifacts.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
//! divergence.

use crate::analysis::{
    self, effective_dimension_from_ensemble, fim_ensemble, metrics, training_dynamics,
};
use crate::circuits::{forward_sampled, ArchitectureSpec};
use crate::classical_nn::MlpSpec;
use crate::datapipe::{
    self, build_dataset, fit_xu_randall, g_inv, generate_synthetic, load_csv, save_csv,
    FeatureSet, Sample, TransformSpec,
};
use crate::gradients::derive_seed;
use crate::model::{ModelParams, ModelSpec};
use crate::training::{
    config_hash, save_run_record, sweep_train_size, train, train_ensemble, LambdaSchedule,
    TrainConfig, TrainError,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "qcover", version, about = "Quantum and classical regressors for cloud cover")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Override the config seed (QCOVER_SEED env var takes precedence over
    /// the config, this flag over both).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 (the default) guarantees bitwise reproducibility.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV plus manifest.
    GenerateData,
    /// Fit the Xu-Randall baseline constants on a dataset.
    FitBaseline,
    /// Train one model and persist the run record.
    Train {
        /// Overwrite existing run artifacts.
        #[arg(long)]
        force: bool,
    },
    /// Parameter sweeps emitting one CSV row per point.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
    },
    /// Post-hoc analyses.
    Analyze {
        #[arg(long, value_enum)]
        kind: AnalyzeKind,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepKind {
    TrainSize,
    Shots,
    Lambda,
}

#[derive(Copy, Clone, ValueEnum)]
enum AnalyzeKind {
    Fim,
    Dynamics,
    Evaluate,
}

fn default_n_samples() -> usize {
    5000
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_feature_set() -> FeatureSet {
    FeatureSet::Six
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    #[serde(default = "default_n_samples")]
    n_samples: usize,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default = "default_feature_set")]
    feature_set: FeatureSet,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    /// Load this CSV instead of generating data.
    #[serde(default)]
    file: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_samples: default_n_samples(),
            noise_sigma: 0.0,
            feature_set: default_feature_set(),
            test_fraction: default_test_fraction(),
            file: None,
        }
    }
}

fn default_epochs() -> usize {
    50
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    #[serde(default = "default_lr")]
    learning_rate: f64,
    #[serde(default = "default_batch")]
    batch_size: usize,
    #[serde(default = "default_epochs")]
    epochs: usize,
    #[serde(default)]
    n_shots: Option<usize>,
    #[serde(default)]
    lambda: f64,
    #[serde(default)]
    lambda_schedule: LambdaSchedule,
    #[serde(default)]
    snapshot_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            n_shots: None,
            lambda: 0.0,
            lambda_schedule: LambdaSchedule::Constant,
            snapshot_every: 0,
        }
    }
}

impl TrainSection {
    fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            n_shots: self.n_shots,
            lambda: self.lambda,
            lambda_schedule: self.lambda_schedule,
            seed,
            init_seed: None,
            snapshot_every: self.snapshot_every,
        }
    }
}

fn default_m_draws() -> usize {
    100
}
fn default_n_data() -> f64 {
    1e5
}
fn default_n_walkers() -> usize {
    5
}
fn default_eval_shots() -> Vec<usize> {
    vec![100, 1000, 10000]
}
fn default_repeats() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisSection {
    /// Monte Carlo draws for FIM spectra / effective dimension.
    #[serde(default = "default_m_draws")]
    m_draws: usize,
    /// Effective-dimension data-size constant n_data.
    #[serde(default = "default_n_data")]
    n_data: f64,
    /// FIM estimation sample count (subsampled from the dataset).
    #[serde(default)]
    fim_samples: Option<usize>,
    /// Walkers for the dynamics analysis.
    #[serde(default = "default_n_walkers")]
    n_walkers: usize,
    /// Matched classical layout for paired FIM / effective-dimension runs.
    #[serde(default)]
    paired_mlp: Option<Vec<usize>>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            m_draws: default_m_draws(),
            n_data: default_n_data(),
            fim_samples: None,
            n_walkers: default_n_walkers(),
            paired_mlp: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    #[serde(default)]
    sizes: Vec<usize>,
    #[serde(default = "default_eval_shots")]
    shots: Vec<usize>,
    #[serde(default)]
    lambdas: Vec<f64>,
    #[serde(default = "default_repeats")]
    repeats: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            shots: default_eval_shots(),
            lambdas: Vec::new(),
            repeats: default_repeats(),
        }
    }
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    model: Option<ModelSpec>,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    analysis: AnalysisSection,
    #[serde(default)]
    sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            data: DataSection::default(),
            model: None,
            train: TrainSection::default(),
            analysis: AnalysisSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

enum CliError {
    Config(String),
    Data(String),
    Divergence(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Divergence(m) | CliError::Io(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Divergence(e.to_string()),
            TrainError::EmptyDataset => CliError::Data(e.to_string()),
            TrainError::Io(_) | TrainError::Serde(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<datapipe::DataError> for CliError {
    fn from(e: datapipe::DataError) -> Self {
        match e {
            datapipe::DataError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::model::ModelError> for CliError {
    fn from(e: crate::model::ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config: ExperimentConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    // Seed precedence: --seed flag > QCOVER_SEED env > config file.
    if let Ok(env_seed) = std::env::var("QCOVER_SEED") {
        config.seed = env_seed
            .parse()
            .map_err(|e| CliError::Config(format!("QCOVER_SEED: {e}")))?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::GenerateData => cmd_generate_data(cli, &config),
        Command::FitBaseline => cmd_fit_baseline(cli, &config),
        Command::Train { force } => cmd_train(cli, &config, *force),
        Command::Sweep { kind } => cmd_sweep(cli, &config, *kind),
        Command::Analyze { kind } => cmd_analyze(cli, &config, *kind),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn manifest_base(config: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "config": config,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "library_version": env!("CARGO_PKG_VERSION"),
        "mpv_convention": "nominal_shots=1",
        "reproducibility": "bitwise",
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

fn cmd_generate_data(cli: &Cli, config: &ExperimentConfig) -> Result<(), CliError> {
    let raws = datapipe::filter_condensate(generate_synthetic(
        config.data.n_samples,
        config.seed,
        config.data.noise_sigma,
    ));
    if raws.is_empty() {
        eprintln!("warning: generated dataset is empty");
    }
    let csv_path = cli.out_dir.join("dataset.csv");
    save_csv(&csv_path, &raws)?;

    let mut hist = vec![0usize; 100];
    for r in &raws {
        hist[((r.clc * 100.0) as usize).min(99)] += 1;
    }
    let mut hist_csv = String::from("bin_low,bin_high,count\n");
    for (i, c) in hist.iter().enumerate() {
        hist_csv.push_str(&format!("{:.2},{:.2},{c}\n", i as f64 / 100.0, (i + 1) as f64 / 100.0));
    }
    std::fs::write(cli.out_dir.join("clc_histogram.csv"), hist_csv)?;

    let mut manifest = manifest_base(config);
    manifest["n_samples"] = serde_json::json!(raws.len());
    manifest["csv"] = serde_json::json!(csv_path.display().to_string());
    write_json(&cli.out_dir.join("dataset.manifest.json"), &manifest)?;

    let interior = raws.iter().filter(|r| r.clc > 0.0 && r.clc < 1.0).count();
    println!(
        "generated {} samples ({} with clc strictly inside (0,1)); histogram in clc_histogram.csv",
        raws.len(),
        interior
    );
    Ok(())
}

fn load_raws(cli: &Cli, config: &ExperimentConfig) -> Result<Vec<datapipe::RawSample>, CliError> {
    match &config.data.file {
        Some(path) => Ok(load_csv(path)?),
        None => {
            let default_path = cli.out_dir.join("dataset.csv");
            if default_path.exists() {
                Ok(load_csv(&default_path)?)
            } else {
                Ok(datapipe::filter_condensate(generate_synthetic(
                    config.data.n_samples,
                    config.seed,
                    config.data.noise_sigma,
                )))
            }
        }
    }
}

/// Deterministic train/test split on the raw records.
fn split_raws(
    raws: Vec<datapipe::RawSample>,
    test_fraction: f64,
    seed: u64,
) -> (Vec<datapipe::RawSample>, Vec<datapipe::RawSample>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..raws.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x59117]));
    idx.shuffle(&mut rng);
    let n_test = ((raws.len() as f64) * test_fraction).round() as usize;
    let test_set: std::collections::HashSet<usize> = idx[..n_test].iter().copied().collect();
    let mut train_v = Vec::with_capacity(raws.len() - n_test);
    let mut test_v = Vec::with_capacity(n_test);
    for (i, r) in raws.into_iter().enumerate() {
        if test_set.contains(&i) {
            test_v.push(r);
        } else {
            train_v.push(r);
        }
    }
    (train_v, test_v)
}

fn cmd_fit_baseline(cli: &Cli, config: &ExperimentConfig) -> Result<(), CliError> {
    let raws = load_raws(cli, config)?;
    if raws.is_empty() {
        return Err(CliError::Data("no samples to fit".into()));
    }
    let (train_raws, test_raws) = split_raws(raws, config.data.test_fraction, config.seed);
    let fit = fit_xu_randall(&train_raws)?;
    let eval = |set: &[datapipe::RawSample]| -> Result<Option<analysis::MetricsReport>, CliError> {
        if set.len() < 2 {
            return Ok(None);
        }
        let preds: Vec<f64> = set
            .iter()
            .map(|r| datapipe::xu_randall(r.q_v, r.q_c, r.q_i, r.p, r.t, fit.alpha, fit.beta))
            .collect::<Result<_, _>>()?;
        let truths: Vec<f64> = set.iter().map(|r| r.clc).collect();
        Ok(metrics(&preds, &truths).ok())
    };
    let mut manifest = manifest_base(config);
    manifest["fit"] = serde_json::to_value(&fit)?;
    manifest["train_metrics"] = serde_json::to_value(eval(&train_raws)?)?;
    manifest["test_metrics"] = serde_json::to_value(eval(&test_raws)?)?;
    write_json(&cli.out_dir.join("baseline.json"), &manifest)?;
    println!(
        "fitted alpha = {:.6e}, beta = {:.6}, train MSE = {:.6e}{}",
        fit.alpha,
        fit.beta,
        fit.mse,
        if fit.degenerate { " (degenerate boundary fit)" } else { "" }
    );
    Ok(())
}

fn model_or_default(config: &ExperimentConfig) -> Result<ModelSpec, CliError> {
    let model = config.model.clone().unwrap_or_else(|| {
        ModelSpec::Qnn(
            ArchitectureSpec::new(crate::circuits::ArchitectureKind::Zzxy, 6, 2, 5)
                .expect("default architecture is valid"),
        )
    });
    model.validate()?;
    if model.n_features() != config.data.feature_set.len() {
        return Err(CliError::Config(format!(
            "model expects {} features but feature set `{:?}` provides {}",
            model.n_features(),
            config.data.feature_set,
            config.data.feature_set.len()
        )));
    }
    Ok(model)
}

fn prepared_samples(
    cli: &Cli,
    config: &ExperimentConfig,
) -> Result<(Vec<Sample>, Vec<Sample>), CliError> {
    let raws = load_raws(cli, config)?;
    if raws.is_empty() {
        return Err(CliError::Data("empty dataset".into()));
    }
    let transform = TransformSpec::defaults(config.data.feature_set);
    let (train_raws, test_raws) = split_raws(raws, config.data.test_fraction, config.seed);
    Ok((build_dataset(&train_raws, &transform), build_dataset(&test_raws, &transform)))
}

fn cmd_train(cli: &Cli, config: &ExperimentConfig, force: bool) -> Result<(), CliError> {
    let model = model_or_default(config)?;
    let (train_set, test_set) = prepared_samples(cli, config)?;
    let run_name = format!("train-{}", model.label());
    let manifest_path = cli.out_dir.join(format!("{run_name}.manifest.json"));
    if manifest_path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} exists; pass --force to overwrite",
            manifest_path.display()
        )));
    }
    let tc = config.train.to_config(config.seed);
    let record = train(&model, &train_set, Some(&test_set), &tc)?;
    save_run_record(&cli.out_dir, &run_name, &record)?;
    let mut manifest = manifest_base(config);
    manifest["run"] = serde_json::json!({
        "model": record.model_label,
        "final_train_mse": record.final_train_mse,
        "final_test_mse": record.final_test_mse,
        "epochs": record.epochs.len(),
        "n_shots": tc.n_shots,
        "lambda": tc.lambda,
        "wall_time_secs": record.wall_time_secs,
    });
    write_json(&manifest_path, &manifest)?;
    match record.final_test_mse {
        Some(t) => println!(
            "trained {}: train MSE {:.6e}, test MSE {:.6e}",
            record.model_label, record.final_train_mse, t
        ),
        None => println!(
            "trained {}: train MSE {:.6e}",
            record.model_label, record.final_train_mse
        ),
    }
    Ok(())
}

fn write_csv_rows(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: &ExperimentConfig, kind: SweepKind) -> Result<(), CliError> {
    let model = model_or_default(config)?;
    let (train_set, test_set) = prepared_samples(cli, config)?;
    let tc = config.train.to_config(config.seed);
    match kind {
        SweepKind::TrainSize => {
            let sizes = if config.sweep.sizes.is_empty() {
                vec![train_set.len() / 4, train_set.len() / 2, train_set.len()]
            } else {
                config.sweep.sizes.clone()
            };
            let rows = sweep_train_size(&model, &train_set, &test_set, &sizes, &tc, config.sweep.repeats)?;
            let lines: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{:.12e},{:.12e},{:.8}",
                        r.train_size, r.repeat, r.train_mse, r.test_mse, r.test_r2
                    )
                })
                .collect();
            write_csv_rows(
                &cli.out_dir.join("sweep_train_size.csv"),
                "train_size,repeat,train_mse,test_mse,test_r2",
                &lines,
            )?;
            println!("train-size sweep: {} rows", lines.len());
        }
        SweepKind::Shots => {
            // Inference-time shot budget on one trained model: repeat the
            // sampled evaluation of the test set per shot count.
            let spec = match &model {
                ModelSpec::Qnn(s) => *s,
                ModelSpec::Mlp(_) => {
                    return Err(CliError::Config("shots sweep needs a quantum model".into()))
                }
            };
            let record = train(&model, &train_set, Some(&test_set), &tc)?;
            let params = match model.params_from_flat(&record.final_params)? {
                ModelParams::Qnn(p) => p,
                _ => unreachable!(),
            };
            let mut lines = Vec::new();
            for &n_shots in &config.sweep.shots {
                let mut mses = Vec::new();
                for rep in 0..config.sweep.repeats {
                    let mut acc = 0.0;
                    for (i, s) in test_set.iter().enumerate() {
                        let seed = derive_seed(config.seed, &[0x5807, n_shots as u64, rep as u64, i as u64]);
                        let (f, _) = forward_sampled(&spec, &params, &s.x, n_shots, seed)
                            .map_err(crate::model::ModelError::Circuit)?;
                        acc += (f - s.y) * (f - s.y);
                    }
                    mses.push(acc / test_set.len() as f64);
                }
                let mean = mses.iter().sum::<f64>() / mses.len() as f64;
                let min = mses.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = mses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                lines.push(format!("{n_shots},{mean:.12e},{min:.12e},{max:.12e}"));
            }
            write_csv_rows(
                &cli.out_dir.join("sweep_shots.csv"),
                "n_shots,test_mse_mean,test_mse_min,test_mse_max",
                &lines,
            )?;
            println!(
                "shots sweep: {} rows (exact test MSE {:.6e})",
                lines.len(),
                record.final_test_mse.unwrap_or(record.final_train_mse)
            );
        }
        SweepKind::Lambda => {
            let spec = match &model {
                ModelSpec::Qnn(s) => *s,
                ModelSpec::Mlp(_) => {
                    return Err(CliError::Config("lambda sweep needs a quantum model".into()))
                }
            };
            let lambdas = if config.sweep.lambdas.is_empty() {
                vec![0.0, 1e-3, 5e-3, 1e-2, 5e-2]
            } else {
                config.sweep.lambdas.clone()
            };
            let mut lines = Vec::new();
            for &lambda in &lambdas {
                let mut c = tc.clone();
                c.lambda = lambda;
                let record = train(&model, &train_set, Some(&test_set), &c)?;
                let params = match model.params_from_flat(&record.final_params)? {
                    ModelParams::Qnn(p) => p,
                    _ => unreachable!(),
                };
                let mpv = analysis::mpv(&spec, &params, &test_set, 1)?;
                lines.push(format!(
                    "{lambda},{:.12e},{:.12e},{:.12e}",
                    record.final_train_mse,
                    record.final_test_mse.unwrap_or(f64::NAN),
                    mpv
                ));
            }
            write_csv_rows(
                &cli.out_dir.join("sweep_lambda.csv"),
                "lambda,train_mse,test_mse,mpv",
                &lines,
            )?;
            println!("lambda sweep: {} rows", lines.len());
        }
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, config: &ExperimentConfig, kind: AnalyzeKind) -> Result<(), CliError> {
    let model = model_or_default(config)?;
    let (train_set, test_set) = prepared_samples(cli, config)?;
    let tc = config.train.to_config(config.seed);
    match kind {
        AnalyzeKind::Evaluate => {
            let record = train(&model, &train_set, Some(&test_set), &tc)?;
            let params = model.params_from_flat(&record.final_params)?;
            // Metrics on the clc scale (after the inverse output transform).
            let preds: Vec<f64> = test_set
                .iter()
                .map(|s| model.forward(&params, &s.x).map(g_inv))
                .collect::<Result<_, _>>()?;
            let truths: Vec<f64> = test_set.iter().map(|s| g_inv(s.y)).collect();
            let report = metrics(&preds, &truths)?;
            let mut manifest = manifest_base(config);
            manifest["metrics_clc_scale"] = serde_json::to_value(&report)?;
            manifest["transformed_space_test_mse"] = serde_json::json!(record.final_test_mse);
            manifest["model"] = serde_json::json!(record.model_label);
            write_json(&cli.out_dir.join("evaluate.json"), &manifest)?;
            println!(
                "evaluate: clc-scale MSE {:.6e}, R2 {:.4}, Hellinger {:.4}, W1 {:.6}",
                report.mse, report.r2, report.hellinger, report.wasserstein
            );
        }
        AnalyzeKind::Fim => {
            let n_fim = config.analysis.fim_samples.unwrap_or(200).min(train_set.len());
            let subset = &train_set[..n_fim];
            let mut specs: Vec<ModelSpec> = vec![model.clone()];
            if let Some(layers) = &config.analysis.paired_mlp {
                specs.push(ModelSpec::Mlp(
                    MlpSpec::tanh(layers.clone()).map_err(crate::model::ModelError::Mlp)?,
                ));
            }
            let mut spectra_lines = Vec::new();
            let mut d_hats = serde_json::Map::new();
            for spec in &specs {
                let ens = fim_ensemble(spec, subset, config.analysis.m_draws, config.seed)?;
                let d_hat = effective_dimension_from_ensemble(&ens, config.analysis.n_data)?;
                d_hats.insert(spec.label(), serde_json::json!(d_hat));
                for (draw, f) in ens.fims.iter().enumerate() {
                    for (rank, lambda) in f.spectrum.iter().enumerate() {
                        spectra_lines.push(format!("{},{draw},{rank},{lambda:.12e}", spec.label()));
                    }
                }
            }
            write_csv_rows(
                &cli.out_dir.join("fim_spectra.csv"),
                "model,draw,rank,eigenvalue",
                &spectra_lines,
            )?;
            let mut manifest = manifest_base(config);
            manifest["effective_dimension"] = serde_json::Value::Object(d_hats.clone());
            manifest["prior"] = serde_json::json!(
                "angles U[0,2pi); weights U[-1,1]; bias U[0,1]; shared draws for spectra and d_hat"
            );
            write_json(&cli.out_dir.join("fim.json"), &manifest)?;
            println!(
                "fim: {} models, d_hat = {}",
                specs.len(),
                serde_json::Value::Object(d_hats.clone())
            );
        }
        AnalyzeKind::Dynamics => {
            if config.analysis.n_walkers < 2 {
                return Err(CliError::Config("dynamics requires at least 2 walkers".into()));
            }
            let mut c = tc.clone();
            if c.snapshot_every == 0 {
                // One snapshot per epoch by default.
                c.snapshot_every = (train_set.len() / c.batch_size).max(1);
            }
            let records = train_ensemble(&model, &train_set, Some(&test_set), &c, config.analysis.n_walkers)?;
            let report = training_dynamics(&records)?;
            let lines: Vec<String> = report
                .msd
                .iter()
                .map(|(step, v)| format!("{step},{v:.12e}"))
                .collect();
            write_csv_rows(&cli.out_dir.join("dynamics_msd.csv"), "step,msd", &lines)?;
            let mut manifest = manifest_base(config);
            manifest["dynamics"] = serde_json::to_value(&report)?;
            manifest["n_walkers"] = serde_json::json!(config.analysis.n_walkers);
            write_json(&cli.out_dir.join("dynamics.json"), &manifest)?;
            println!(
                "dynamics: integrated MSD {:.6e}, loss spread {:.6e}",
                report.integrated_msd, report.loss_spread
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.data.n_samples, 5000);
        assert_eq!(c.train.batch_size, 100);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede": 1}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"train": {"epocs": 1}}"#).is_err());
    }

    #[test]
    fn model_section_parses_both_families() {
        let q: ExperimentConfig = serde_json::from_str(
            r#"{"model": {"family": "qnn", "kind": "ZZXY", "n_qubits": 6, "n_enc": 2, "n_var": 5}}"#,
        )
        .unwrap();
        assert_eq!(q.model.as_ref().unwrap().param_count(), 114);
        let m: ExperimentConfig = serde_json::from_str(
            r#"{"model": {"family": "mlp", "layer_sizes": [6,8,3,7,1],
                "activations": ["tanh","tanh","tanh"]}}"#,
        )
        .unwrap();
        assert_eq!(m.model.as_ref().unwrap().param_count(), 119);
    }

    #[test]
    fn config_hash_is_stable() {
        let a: ExperimentConfig = serde_json::from_str("{}").unwrap();
        let b: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: ExperimentConfig = serde_json::from_str(r#"{"seed": 1}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let raws = generate_synthetic(100, 1, 0.0);
        let (tr1, te1) = split_raws(raws.clone(), 0.2, 9);
        let (tr2, te2) = split_raws(raws, 0.2, 9);
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.len() + te1.len(), 100);
        assert_eq!(te1.len(), 20);
    }
}
