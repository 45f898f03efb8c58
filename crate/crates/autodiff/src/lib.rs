//! A small reverse-mode automatic differentiation engine.
//!
//! Values live on a [`Tape`]: every operation appends a node holding its
//! forward value and enough saved state to run its vector-Jacobian product.
//! Parameters are plain [`Tensor`]s owned by the caller; a tape borrows them
//! as leaves, so building a graph per document never copies weight buffers.
//!
//! The operation set is deliberately narrow. It covers dense matrix algebra,
//! the recurrent and convolutional encoders, Gumbel-Softmax sampling, sparse
//! and dense normalizers, and the losses used by the masker models.

mod error;
pub mod gradcheck;
mod nn;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use nn::{sparsemax_slice, ConvVars, LstmVars};
pub use optim::{adam_step, clip_grad_norm, global_grad_norm, AdamConfig, AdamState};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Guard used inside both logarithms of the Gumbel inverse CDF.
pub const GUMBEL_EPS: f64 = 1e-10;

/// Clipping applied to probabilities before taking logs in binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
