//! Dense double-precision tensors with a reverse-mode gradient tape.
//!
//! A [`Tape`] records every operation in append order, caching forward
//! values. [`Tape::backward`] walks the record in exact reverse and
//! accumulates analytic gradients into every node that depends on a
//! trainable leaf.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use gradcheck::{grad_check, relative_error};
pub use layers::{attention, attention_with_transpose, linear, lstm_cell_step, LinearVars, LstmParams, LstmVars};
pub use optim::{clip_global_norm, sgd_step, Adam};
pub use params::{Binding, Gradients, ParamStore};
pub use tape::{Adjoints, BackwardFn, Padding, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),
    #[error("backward already ran on this tape; record a fresh forward pass")]
    BackwardTwice,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter {0:?}")]
    MissingParameter(String),
}

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
