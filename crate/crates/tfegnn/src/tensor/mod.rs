//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! The engine is a flat tape: every operation appends a node holding its
//! output value and enough context to replay exact analytic gradients in
//! reverse. Trainable parameters live outside the tape in a [`ParamStore`];
//! `backward` accumulates `d(loss)/d(param)` into the store's gradient
//! buffers, so repeated backward passes without a reset accumulate.

mod check;
mod store;
mod tape;

pub use check::gradient_check;
pub use store::{load_checkpoint, save_checkpoint, CheckpointError, ParamId, ParamStore};
pub use tape::{Tape, TensorId};

use thiserror::Error;

/// Row-major dimension sizes; an empty shape is a scalar.
pub type Shape = Vec<usize>;

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Shape,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Shape,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Shape),
    #[error("dropout rate must satisfy 0 <= rate < 1, got {0}")]
    BadDropoutRate(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("gather index {index} out of range for table with {rows} rows")]
    GatherOutOfRange { index: usize, rows: usize },
    #[error("{op}: empty input list")]
    EmptyInput { op: &'static str },
}
