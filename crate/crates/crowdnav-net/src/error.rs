//! Error type shared across the network crates.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NotScalarLoss { rows: usize, cols: usize },
    #[error("backward on a constant leaf")]
    BackwardOnConstant,
    #[error("invalid network dimensions: {0}")]
    InvalidDims(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
