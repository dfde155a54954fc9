//! Two-party split-learning simulator for binary classification.
//!
//! The label party trains a logit head on the cut-layer features sent by the
//! non-label party and returns per-example cut gradients. Those gradients leak
//! labels: positive examples have larger norms under class imbalance, and the
//! gradient direction flips sign with the label. This crate provides
//!
//! * [`attacks`]: norm and cosine scoring attacks and the leak-AUC metric,
//! * [`protection`]: `none`, `iso`, `max_norm` and `marvell` gradient perturbations,
//! * [`solver`]: the optimal class-conditional noise covariances behind `marvell`,
//!   with sumKL-based leak-AUC certificates,
//! * [`model`]: the split MLP and its backward pass,
//! * [`harness`]: the training loop, sweeps and CSV reports driven by the CLI.
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod error;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod protection;
pub mod solver;

pub use error::{Error, Result};
