//! Dual-path fraud detection: a reconstruction-error scorer on the synchronous
//! path, an adversarial fraud synthesizer on the asynchronous path, and
//! Shapley explanations computed only for flagged transactions.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod codec;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod pipeline;
pub mod shap;
pub mod sim;
pub mod vae;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
