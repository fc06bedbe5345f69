//! Simulation, signal processing and classification for a knitted
//! capacitive gesture touchpad.
//!
//! - [`mesh`]: AC nodal model of the resistive sheet and its DC analyses.
//! - [`gesture`]: stroke geometry, synthetic subjects and datasets.
//! - [`signal`]: gain extraction, baseline removal and wavelet filtering.
//! - [`nn`]: the CNN-LSTM and LSTM-only classifiers, training and model files.
//! - [`eval`]: cross-validation, held-out evaluation and metrics.

pub mod error;
pub mod eval;
pub mod gesture;
pub mod mesh;
pub mod nn;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
