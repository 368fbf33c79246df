use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("contraction order {r} out of range for kernels of orders {n} and {q}")]
    ContractionOrder { r: usize, n: usize, q: usize },
    #[error("operator is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("functional is not centered: |E[F]| = {0:e}")]
    NonzeroMean(f64),
    #[error("covariance has a negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
