use thiserror::Error;

use crate::signal::Shape;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Shape, right: Shape },

    #[error("sample count {got} does not match shape {shape:?}")]
    LengthMismatch { shape: Shape, got: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("parameter outside the dictionary domain: {0}")]
    Domain(String),

    #[error("degenerate metric (condition number {condition:.3e})")]
    DegenerateMetric { condition: f64 },

    #[error("grid is empty")]
    EmptyGrid,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
