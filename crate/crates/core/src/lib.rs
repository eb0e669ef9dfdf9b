//! Probabilistic forecasting of (quasi-)deterministic time series.
//!
//! The toolkit centers on an ordinal-regression recurrent forecaster: a
//! bounded series is quantized into equal-width bins, a bidirectional
//! encoder / autoregressive decoder LSTM predicts a categorical density per
//! future step, and Monte-Carlo dropout turns repeated stochastic passes into
//! a model-uncertainty-aware predictive density. Around it sit classical
//! baselines (direct-regression seq2seq, AR(p) with Kalman prediction,
//! autoregressive Gaussian processes with Monte-Carlo trajectories and
//! mixture summaries), a calibration-focused metric suite, deterministic
//! chaotic-system generators, and an event-timing pipeline (peak detection,
//! empirical mode decomposition, kernel density estimation).
//!
//! All numerics are 64-bit. Every stochastic routine takes an explicit RNG
//! or seed and is bit-reproducible for a fixed seed.

pub mod baselines;
pub mod checkpoint;
pub mod datagen;
pub mod dist;
pub mod error;
pub mod events;
pub mod metrics;
pub mod nnet;
pub mod ordinal;
pub mod seq2seq;

pub use dist::{ForecastDensities, Gaussian, GmmDensity};
pub use error::{Error, Result};
pub use ordinal::{BinPartition, CategoricalDensity, OrdinalSequence};
