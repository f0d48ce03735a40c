use thiserror::Error;

/// Errors raised by data validation, preprocessing and the embedding methods.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{0} did not converge")]
    NoConvergence(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
