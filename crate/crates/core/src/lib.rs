//! Function-space diffusion models on spectral Gaussian reference measures.
//!
//! The crate works in the eigenbasis of a trace-class covariance operator `Q`:
//! every function is a vector of spectral coefficients, the forward
//! variance-preserving SDE decouples into independent scalar SDEs per mode,
//! and the logarithmic gradient of the noised data law is assembled mode by
//! mode. On top of that sit the probability-flow ODE and reverse SDE samplers,
//! a denoising-score-matching fit, a finite-difference heat solver used as a
//! ground-truth oracle, and sample-quality metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod heat;
pub mod io;
pub mod learning;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod spectral;

pub use error::{Error, Result};
