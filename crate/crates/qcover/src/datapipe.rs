//! Data pipeline: feature/target transformations, the Xu-Randall cloud cover
//! baseline, toy coarse-graining, synthetic dataset generation, and CSV I/O.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(&'static str),
    #[error("malformed row at line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("invalid transform spec: {0}")]
    InvalidSpec(String),
    #[error("non-positive {name}: {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("empty dataset")]
    Empty,
}

/// One coarse grid cell: thermodynamic state plus the cloud cover target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    /// Specific humidity, kg/kg.
    pub q_v: f64,
    /// Specific cloud water content, kg/kg.
    pub q_c: f64,
    /// Specific cloud ice content, kg/kg.
    pub q_i: f64,
    /// Temperature, K.
    pub t: f64,
    /// Pressure, Pa.
    pub p: f64,
    /// Vertical wind magnitude, m/s.
    pub h_w: f64,
    /// Geometric height, m.
    pub z_g: f64,
    /// Latitude, rad.
    pub phi: f64,
    /// Cloud cover fraction in [0, 1].
    pub clc: f64,
}

/// A transformed training sample: features in [0, pi], target in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Per-feature scaling onto [0, 1] (multiplied by pi at assembly).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureScaling {
    /// h(x) = [ln(1 + (e-1) (x/x_high)^b) - h0] / (1 - h0); flattens
    /// sharply-peaked distributions while keeping tail variability.
    LogLinear { b: f64, x_low: f64, x_high: f64 },
    /// Plain min-max scaling.
    MinMax { x_low: f64, x_high: f64 },
}

impl FeatureScaling {
    pub fn validate(&self) -> Result<(), DataError> {
        let (low, high) = match *self {
            FeatureScaling::LogLinear { b, x_low, x_high } => {
                if b <= 0.0 {
                    return Err(DataError::InvalidSpec(format!("b must be > 0, got {b}")));
                }
                (x_low, x_high)
            }
            FeatureScaling::MinMax { x_low, x_high } => (x_low, x_high),
        };
        if !(high > low) {
            return Err(DataError::InvalidSpec(format!(
                "x_high ({high}) must exceed x_low ({low})"
            )));
        }
        Ok(())
    }
}

/// Which raw fields feed the model, in circuit-qubit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// q_v, q_c, q_i, T, p, z_g, h_w, phi.
    Eight,
    /// q_v, q_c, q_i, T, p, h_w.
    Six,
}

impl FeatureSet {
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            FeatureSet::Eight => &["q_v", "q_c", "q_i", "T", "p", "z_g", "h_w", "phi"],
            FeatureSet::Six => &["q_v", "q_c", "q_i", "T", "p", "h_w"],
        }
    }

    pub fn len(&self) -> usize {
        self.names().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn extract(&self, r: &RawSample) -> Vec<f64> {
        match self {
            FeatureSet::Eight => vec![r.q_v, r.q_c, r.q_i, r.t, r.p, r.z_g, r.h_w, r.phi],
            FeatureSet::Six => vec![r.q_v, r.q_c, r.q_i, r.t, r.p, r.h_w],
        }
    }
}

/// Full input transformation: one scaling per feature plus the angle scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub feature_set: FeatureSet,
    pub scalings: Vec<FeatureScaling>,
    /// Features are mapped to [0, output_scale]; pi by default so they can
    /// serve as rotation angles.
    pub output_scale: f64,
}

fn scaling_for(name: &str) -> FeatureScaling {
    match name {
        "q_v" => FeatureScaling::LogLinear { b: 0.25, x_low: 1e-7, x_high: 0.025 },
        "q_c" => FeatureScaling::LogLinear { b: 0.25, x_low: 0.0, x_high: 0.00145 },
        "q_i" => FeatureScaling::LogLinear { b: 0.25, x_low: 0.0, x_high: 0.00055 },
        "h_w" => FeatureScaling::LogLinear { b: 0.5, x_low: 0.0015, x_high: 115.0 },
        "T" => FeatureScaling::MinMax { x_low: 200.0, x_high: 310.0 },
        "p" => FeatureScaling::MinMax { x_low: 5e3, x_high: 1.05e5 },
        "z_g" => FeatureScaling::MinMax { x_low: 0.0, x_high: 21000.0 },
        "phi" => FeatureScaling::MinMax {
            x_low: -std::f64::consts::FRAC_PI_2,
            x_high: std::f64::consts::FRAC_PI_2,
        },
        other => unreachable!("unknown feature {other}"),
    }
}

impl TransformSpec {
    /// Shipped defaults for a feature set.
    pub fn defaults(feature_set: FeatureSet) -> Self {
        Self {
            feature_set,
            scalings: feature_set.names().iter().map(|n| scaling_for(n)).collect(),
            output_scale: std::f64::consts::PI,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.scalings.len() != self.feature_set.len() {
            return Err(DataError::InvalidSpec(format!(
                "{} scalings for {} features",
                self.scalings.len(),
                self.feature_set.len()
            )));
        }
        for s in &self.scalings {
            s.validate()?;
        }
        Ok(())
    }

    /// Transform one raw record into a feature vector in [0, output_scale].
    pub fn apply(&self, raw: &RawSample) -> Vec<f64> {
        self.feature_set
            .extract(raw)
            .iter()
            .zip(&self.scalings)
            .map(|(&v, s)| self.output_scale * transform_feature(s, v))
            .collect()
    }
}

/// Scale one raw value into [0, 1]; values outside [x_low, x_high] clamp.
pub fn transform_feature(scaling: &FeatureScaling, value: f64) -> f64 {
    match *scaling {
        FeatureScaling::MinMax { x_low, x_high } => {
            ((value - x_low) / (x_high - x_low)).clamp(0.0, 1.0)
        }
        FeatureScaling::LogLinear { b, x_low, x_high } => {
            let v = value.clamp(x_low, x_high);
            let em1 = std::f64::consts::E - 1.0;
            let h = |x: f64| (1.0 + em1 * (x / x_high).powf(b)).ln();
            let h0 = h(x_low);
            ((h(v) - h0) / (1.0 - h0)).clamp(0.0, 1.0)
        }
    }
}

const G_A: f64 = 1.29407913;
const G_B: f64 = -3.20011015;
const G_C: f64 = 0.70308237;

/// Output transformation g: [0,1] -> [0,1], flattening the clc histogram.
pub fn g(clc: f64) -> f64 {
    let x = clc.clamp(0.0, 1.0);
    let ratio = ((G_B * x.powf(G_A)).exp() - 1.0) / (G_B.exp() - 1.0);
    let arg = (2.0 * ratio.powf(G_C) - 1.0).clamp(-1.0, 1.0);
    0.5 + arg.asin() / std::f64::consts::PI
}

/// Closed-form inverse of `g`; inputs clamp to [0, 1].
pub fn g_inv(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    let u = (((std::f64::consts::PI * (y - 0.5)).sin() + 1.0) / 2.0).powf(1.0 / G_C);
    let inner = (1.0 + u * (G_B.exp() - 1.0)).ln() / G_B;
    // inner lies in [0, 1] up to round-off; powf would NaN on tiny negatives.
    inner.max(0.0).powf(1.0 / G_A)
}

/// Saturation vapor pressure over water (Murray-type fit), Pa.
pub fn saturation_vapor_pressure(t: f64) -> f64 {
    610.78 * (17.2693882 * (t - 273.16) / (t - 35.86)).exp()
}

/// Relative humidity from specific humidity, pressure, and temperature.
pub fn relative_humidity(q_v: f64, p: f64, t: f64) -> f64 {
    let rh = (p / saturation_vapor_pressure(t)) * q_v / (0.622 + 0.378 * q_v);
    rh.max(0.0)
}

/// Simplified Xu-Randall cloud cover diagnostic:
/// clc = min{1, RH^beta (1 - exp(-alpha (q_c + q_i)))}.
pub fn xu_randall(
    q_v: f64,
    q_c: f64,
    q_i: f64,
    p: f64,
    t: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64, DataError> {
    if !(t > 0.0) {
        return Err(DataError::NonPositive { name: "T", value: t });
    }
    if !(p > 0.0) {
        return Err(DataError::NonPositive { name: "p", value: p });
    }
    let rh = relative_humidity(q_v, p, t);
    let cond = 1.0 - (-alpha * (q_c + q_i)).exp();
    Ok((rh.powf(beta) * cond).clamp(0.0, 1.0))
}

/// Planted generator constants; also the expected outcome of `fit_xu_randall`
/// on clean synthetic data.
pub const XU_RANDALL_ALPHA: f64 = 4.034e4;
pub const XU_RANDALL_BETA: f64 = 0.9942;

/// Result of the baseline fit. `degenerate` flags a boundary solution
/// (e.g. all-zero targets driving alpha to 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XuRandallFit {
    pub alpha: f64,
    pub beta: f64,
    pub mse: f64,
    pub degenerate: bool,
}

fn xu_randall_mse(data: &[RawSample], alpha: f64, beta: f64) -> f64 {
    let mut acc = 0.0;
    for r in data {
        let pred = xu_randall(r.q_v, r.q_c, r.q_i, r.p, r.t, alpha, beta).unwrap_or(0.0);
        let d = pred - r.clc;
        acc += d * d;
    }
    acc / data.len() as f64
}

/// MSE fit of (alpha, beta): coarse log-grid scan over alpha and a beta grid,
/// then Adam refinement on (ln alpha, beta).
pub fn fit_xu_randall(data: &[RawSample]) -> Result<XuRandallFit, DataError> {
    if data.is_empty() {
        return Err(DataError::Empty);
    }
    let mut best = (f64::INFINITY, 1e4f64.ln(), 1.0);
    for i in 0..=24 {
        let log_alpha = (1e2f64.ln()) + i as f64 / 24.0 * (1e7f64.ln() - 1e2f64.ln());
        for j in 0..=10 {
            let beta = 0.5 + j as f64 * 0.1;
            let mse = xu_randall_mse(data, log_alpha.exp(), beta);
            if mse < best.0 {
                best = (mse, log_alpha, beta);
            }
        }
    }
    // Adam on theta = (ln alpha, beta), central-difference gradients.
    let (mut la, mut beta) = (best.1, best.2);
    let (lr, b1, b2, eps_adam) = (0.02, 0.9, 0.999, 1e-8);
    let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
    let h = 1e-5;
    for t in 1..=1500u32 {
        let gla = (xu_randall_mse(data, (la + h).exp(), beta)
            - xu_randall_mse(data, (la - h).exp(), beta))
            / (2.0 * h);
        let gb = (xu_randall_mse(data, la.exp(), beta + h)
            - xu_randall_mse(data, la.exp(), beta - h))
            / (2.0 * h);
        for (k, gk) in [gla, gb].into_iter().enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let mh = m[k] / (1.0 - b1.powi(t as i32));
            let vh = v[k] / (1.0 - b2.powi(t as i32));
            let step = lr * mh / (vh.sqrt() + eps_adam);
            if k == 0 {
                la -= step;
            } else {
                beta -= step;
            }
        }
        beta = beta.clamp(0.0, 5.0);
        la = la.clamp(-5.0, 25.0);
    }
    let mse = xu_randall_mse(data, la.exp(), beta);
    // A fit pinned at the alpha floor (or fed constant-zero clc) is a
    // boundary solution, reported rather than rejected.
    let degenerate = la <= -4.99 || data.iter().all(|r| r.clc == 0.0);
    Ok(XuRandallFit { alpha: la.exp(), beta, mse, degenerate })
}

/// Toy coarse-graining: fraction of high-res cells whose condensate exceeds
/// 1e-6 kg/kg.
pub fn coarse_grain_toy(highres_cells: &[(f64, f64)]) -> f64 {
    if highres_cells.is_empty() {
        return 0.0;
    }
    let set = highres_cells.iter().filter(|(qc, qi)| qc + qi > 1e-6).count();
    set as f64 / highres_cells.len() as f64
}

/// Drop cells with zero total condensate.
pub fn filter_condensate(dataset: Vec<RawSample>) -> Vec<RawSample> {
    dataset.into_iter().filter(|r| r.q_c + r.q_i > 0.0).collect()
}

fn log_uniform<R: Rng>(rng: &mut R, low: f64, high: f64) -> f64 {
    (rng.gen_range(low.ln()..high.ln())).exp()
}

/// Synthetic dataset: features drawn from documented physically-plausible
/// distributions, targets from the planted Xu-Randall scheme plus clipped
/// Gaussian noise. Deterministic per seed; zero-condensate cells never occur
/// by construction.
pub fn generate_synthetic(n_samples: usize, rng_seed: u64, noise_sigma: f64) -> Vec<RawSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let hw_half_normal = Normal::new(0.0, 20.0).unwrap();
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let q_v = log_uniform(&mut rng, 1e-7, 0.025);
        let q_c = log_uniform(&mut rng, 1e-9, 0.00145);
        let q_i = log_uniform(&mut rng, 1e-9, 0.00055);
        let t = rng.gen_range(200.0..310.0);
        let p = rng.gen_range(5e3..1.05e5);
        let h_w = f64::abs(hw_half_normal.sample(&mut rng)).min(115.0);
        let z_g = rng.gen_range(0.0..21000.0);
        let phi = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let clean = xu_randall(q_v, q_c, q_i, p, t, XU_RANDALL_ALPHA, XU_RANDALL_BETA).unwrap();
        let clc = if noise_sigma > 0.0 {
            (clean + noise.sample(&mut rng)).clamp(0.0, 1.0)
        } else {
            clean
        };
        out.push(RawSample { q_v, q_c, q_i, t, p, h_w, z_g, phi, clc });
    }
    out
}

/// Raw records -> model-ready samples: transformed features, y = g(clc).
pub fn build_dataset(raws: &[RawSample], transform: &TransformSpec) -> Vec<Sample> {
    raws.iter()
        .map(|r| Sample { x: transform.apply(r), y: g(r.clc) })
        .collect()
}

pub const CSV_HEADER: [&str; 9] = ["q_v", "q_c", "q_i", "T", "p", "h_w", "z_g", "phi", "clc"];

pub fn save_csv(path: &Path, dataset: &[RawSample]) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", CSV_HEADER.join(","))?;
    for r in dataset {
        // 17 significant digits: lossless f64 round trip.
        writeln!(
            f,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.q_v, r.q_c, r.q_i, r.t, r.p, r.h_w, r.z_g, r.phi, r.clc
        )?;
    }
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Vec<RawSample>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                e.to_string(),
            )),
            _ => DataError::MalformedRow { line: 0, msg: e.to_string() },
        })?;
    let headers: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_owned).collect(),
        Err(_) => Vec::new(),
    };
    if headers.is_empty() {
        eprintln!("warning: {} is empty; returning empty dataset", path.display());
        return Ok(Vec::new());
    }
    let mut col = [0usize; 9];
    for (k, name) in CSV_HEADER.iter().enumerate() {
        col[k] = headers
            .iter()
            .position(|h| h == name)
            .ok_or(DataError::MissingColumn(name))?;
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let rec = rec.map_err(|e| DataError::MalformedRow { line, msg: e.to_string() })?;
        let field = |k: usize| -> Result<f64, DataError> {
            rec.get(col[k])
                .ok_or_else(|| DataError::MalformedRow {
                    line,
                    msg: format!("missing field `{}`", CSV_HEADER[k]),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| DataError::MalformedRow {
                    line,
                    msg: format!("field `{}`: {e}", CSV_HEADER[k]),
                })
        };
        out.push(RawSample {
            q_v: field(0)?,
            q_c: field(1)?,
            q_i: field(2)?,
            t: field(3)?,
            p: field(4)?,
            h_w: field(5)?,
            z_g: field(6)?,
            phi: field(7)?,
            clc: field(8)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loglinear_endpoints() {
        for name in ["q_v", "q_c", "q_i", "h_w"] {
            let s = scaling_for(name);
            let (low, high) = match s {
                FeatureScaling::LogLinear { x_low, x_high, .. } => (x_low, x_high),
                _ => unreachable!(),
            };
            assert_eq!(transform_feature(&s, low), 0.0, "{name} low endpoint");
            assert_eq!(transform_feature(&s, high), 1.0, "{name} high endpoint");
            // Clamping beyond the bounds.
            assert_eq!(transform_feature(&s, low - 1.0), 0.0);
            assert_eq!(transform_feature(&s, high + 1.0), 1.0);
        }
    }

    #[test]
    fn loglinear_monotone_interior() {
        let s = scaling_for("q_v");
        let a = transform_feature(&s, 1e-5);
        let b = transform_feature(&s, 1e-4);
        let c = transform_feature(&s, 1e-3);
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn output_transform_endpoints_and_roundtrip() {
        assert_abs_diff_eq!(g(0.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g(1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g_inv(g(0.37)), 0.37, epsilon = 1e-10);
        let mut prev = g(0.0);
        for i in 1..=10_000 {
            let x = i as f64 / 10_000.0;
            let y = g(x);
            assert!(y >= prev, "g not increasing at {x}");
            assert_abs_diff_eq!(g_inv(y), x, epsilon = 1e-10);
            prev = y;
        }
    }

    #[test]
    fn xu_randall_limits() {
        // No condensate -> no cloud regardless of humidity.
        let clc = xu_randall(0.02, 0.0, 0.0, 9e4, 280.0, XU_RANDALL_ALPHA, 1.0).unwrap();
        assert_eq!(clc, 0.0);
        // Saturated RH with huge alpha -> full cover.
        let t = 280.0;
        let ps = saturation_vapor_pressure(t);
        // Solve RH = 1 for q_v at p: q_v = 0.622 ps / (p - 0.378 ps)
        let p = 9e4;
        let q_v = 0.622 * ps / (p - 0.378 * ps);
        let clc = xu_randall(q_v, 1.0, 0.0, p, t, 1e12, 1.0).unwrap();
        assert_abs_diff_eq!(clc, 1.0, epsilon = 1e-12);
        assert!(xu_randall(0.01, 0.0, 0.0, 9e4, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn xu_randall_bounded_on_random_inputs() {
        let data = generate_synthetic(2000, 5, 0.0);
        for r in &data {
            assert!((0.0..=1.0).contains(&r.clc));
        }
    }

    #[test]
    fn coarse_grain_flags() {
        assert_eq!(coarse_grain_toy(&[(2e-6, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 2e-6)]), 0.5);
        assert_eq!(coarse_grain_toy(&[(0.0, 0.0); 4]), 0.0);
        assert_eq!(coarse_grain_toy(&[(1e-3, 0.0); 4]), 1.0);
    }

    #[test]
    fn condensate_filter() {
        let mut r = generate_synthetic(3, 1, 0.0);
        r[1].q_c = 0.0;
        r[1].q_i = 0.0;
        let n = r.len();
        let kept = filter_condensate(r);
        assert_eq!(kept.len(), n - 1);
        assert!(kept.iter().all(|s| s.q_c + s.q_i > 0.0));
    }

    #[test]
    fn synthetic_determinism_and_noiseless_targets() {
        let a = generate_synthetic(200, 42, 0.0);
        let b = generate_synthetic(200, 42, 0.0);
        assert_eq!(a, b);
        for r in &a {
            let clean =
                xu_randall(r.q_v, r.q_c, r.q_i, r.p, r.t, XU_RANDALL_ALPHA, XU_RANDALL_BETA)
                    .unwrap();
            assert_eq!(r.clc, clean);
        }
        let interior = a.iter().filter(|r| r.clc > 0.0 && r.clc < 1.0).count();
        assert!(interior * 10 >= a.len(), "degenerate clc histogram: {interior}/200");
    }

    #[test]
    fn planted_recovery() {
        let data = generate_synthetic(3000, 7, 0.0);
        let fit = fit_xu_randall(&data).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.alpha - XU_RANDALL_ALPHA).abs() / XU_RANDALL_ALPHA < 0.05, "alpha {}", fit.alpha);
        assert!((fit.beta - XU_RANDALL_BETA).abs() / XU_RANDALL_BETA < 0.05, "beta {}", fit.beta);
    }

    #[test]
    fn degenerate_fit_flagged() {
        let mut data = generate_synthetic(200, 9, 0.0);
        for r in &mut data {
            r.clc = 0.0;
        }
        let fit = fit_xu_randall(&data).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn feature_vector_ranges_and_order() {
        let spec = TransformSpec::defaults(FeatureSet::Eight);
        spec.validate().unwrap();
        for r in generate_synthetic(500, 11, 0.1) {
            let x = spec.apply(&r);
            assert_eq!(x.len(), 8);
            assert!(x.iter().all(|&v| (0.0..=std::f64::consts::PI).contains(&v)));
        }
        let six = TransformSpec::defaults(FeatureSet::Six);
        assert_eq!(six.feature_set.names(), ["q_v", "q_c", "q_i", "T", "p", "h_w"]);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = std::env::temp_dir().join("qcover-datapipe-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        let data = generate_synthetic(50, 3, 0.05);
        save_csv(&path, &data).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn csv_errors() {
        let dir = std::env::temp_dir().join("qcover-datapipe-test");
        std::fs::create_dir_all(&dir).unwrap();

        let missing = dir.join("missing.csv");
        std::fs::write(&missing, "q_v,q_c,q_i,T,p,h_w,z_g,phi\n1,2,3,4,5,6,7,8\n").unwrap();
        match load_csv(&missing) {
            Err(DataError::MissingColumn(c)) => assert_eq!(c, "clc"),
            other => panic!("expected missing-column error, got {other:?}"),
        }

        let bad = dir.join("bad.csv");
        std::fs::write(&bad, "q_v,q_c,q_i,T,p,h_w,z_g,phi,clc\n1,2,3,4,5,6,7,8,oops\n").unwrap();
        match load_csv(&bad) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-row error, got {other:?}"),
        }

        let empty = dir.join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_csv(&empty).unwrap().is_empty());
    }
}
