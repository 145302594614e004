//! Quantum and classical neural-network regressors for cloud cover
//! prediction: state-vector simulation, data re-uploading circuit ansatzes,
//! parameter-shift gradients, shot-noise statistics, variance regularization,
//! and information-geometry diagnostics, plus a synthetic data pipeline and
//! the Xu-Randall baseline.

pub mod analysis;
pub mod circuits;
pub mod classical_nn;
pub mod cli;
pub mod datapipe;
pub mod gradients;
pub mod model;
pub mod statevector;
pub mod training;
