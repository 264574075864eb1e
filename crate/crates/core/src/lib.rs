//! Frequency-domain neural network training engine.
//!
//! Replaces spatial convolution with per-bin complex multiplication of
//! conjugated input spectra against padded-kernel spectra, trains entirely
//! on the two-branch (real/imaginary) representation, and regularizes the
//! spectral weights back onto a KxK spatial support after every optimizer
//! step (Weight Fixation). Ships with frequency-domain batch normalization,
//! multiplicative-noise surrogates for Dropout and Leaky ReLU, a
//! time-domain max-pooling bridge, dataset loaders, an operation-count
//! profiler, and brute-force oracles everything is validated against.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fft;
pub mod layers;
pub mod models;
pub mod oracle;
pub mod plane;
pub mod profile;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use plane::{ComplexPlane, FeatureBlock, RealPlane};
