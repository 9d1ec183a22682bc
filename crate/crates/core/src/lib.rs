//! Block-circulant neural network layers with FFT-diagonal Hessian diagnostics.
//!
//! The library implements the CDLinear layer (a block-circulant linear map
//! evaluated by FFT circular convolution), hand-derived backward passes, the
//! closed-form Hessian spectrum of such a layer, Shannon dropout and the
//! Fisher-trace regularizer, plus a small self-contained training stack
//! (SGD with momentum, digits dataset ingestion, multi-seed experiment
//! driver) used by the `cdnn` command-line tool.
//!
//! Everything is f64 and single-threaded by design; the largest matrices
//! involved are 64x64.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod network;
pub mod regularization;
pub mod rng;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
