//! Minimal differentiable compute core.
//!
//! Each layer exposes an explicit forward and backward pass; there is no
//! general autodiff graph. Parameters live in a [`ParameterSet`] so the
//! optimizer, the gradient checker and the checkpoint writer all see one
//! flat, ordered store.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod loss;
mod lstm;
mod params;
mod pool;
mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, tanh};
pub use adam::AdamState;
pub use batchnorm::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNorm1d, BatchNormCache, BN_EPS,
    BN_MOMENTUM,
};
pub use conv::{conv1d, conv1d_backward, Conv1d, Conv1dGrads};
pub use dense::{dense, dense_backward, Dense};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{
    grad_check, grad_check_smooth, relative_error, Coordinates, GradCheckReport, TensorError,
};
pub use loss::{bce_loss, clamp_probability, P_CLAMP};
pub use lstm::{LstmCache, LstmLayer};
pub use params::{Param, ParamId, ParamSpec, ParameterSet};
pub use pool::{maxpool1d, maxpool1d_backward, Pooled};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GradError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropout(f64),
    #[error("batch norm evaluated before any training update")]
    BatchNormUninitialized,
}

/// Forward-pass mode for layers whose behaviour differs between training
/// and inference (dropout, batch norm).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
