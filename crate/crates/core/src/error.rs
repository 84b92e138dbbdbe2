use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Degree(&'static str),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("form is not closed: boundary sum {residual:e} on face {face}")]
    NotClosed { face: usize, residual: f64 },

    #[error("non-integer input at cell {cell}: {value}")]
    NonInteger { cell: usize, value: f64 },

    #[error("linear solver failed: residual {residual:e} after {iterations} iterations")]
    Solver { residual: f64, iterations: usize },

    #[error("cholesky factorization failed at pivot {0}")]
    Factorization(usize),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("uncertified truncation: {0}")]
    Uncertified(String),
}

pub type Result<T> = std::result::Result<T, Error>;
