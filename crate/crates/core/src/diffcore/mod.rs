//! Dense linear algebra, a reverse-mode tape and small MLPs.

mod matrix;
mod mlp;
mod tape;

pub use matrix::{dot, norm_sq, Matrix};
pub use mlp::{Activation, BoundMlp, Dense, MlpParams, MlpSpec};
pub use tape::{NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{context}: expected shape {expected:?}, found {found:?}")]
    Shape {
        context: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("layer {layer}: expected input width {expected}, found {found}")]
    LayerShape {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("gradient root must be a scalar, found shape {shape:?}")]
    NonScalarRoot { shape: (usize, usize) },
    #[error("non-finite value in backward pass at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("layer {layer} has a non-finite parameter")]
    NonFiniteParameter { layer: usize },
    #[error("clip bound must be positive, got {0}")]
    InvalidClip(f64),
    #[error("input gradient needs a scalar-output network, output width is {width}")]
    VectorOutput { width: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}
