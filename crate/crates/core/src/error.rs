use thiserror::Error;

/// Errors produced by the numerical building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("closed loop is not Schur stable (spectral radius estimate {0:.6})")]
    UnstableClosedLoop(f64),

    #[error("DARE did not converge after {iterations} iterations (last residual {residual:.3e})")]
    DareNotConverged { iterations: usize, residual: f64 },

    #[error("no certified design found within budget ({0})")]
    NoCertifiedDesign(String),
}

pub type Result<T> = std::result::Result<T, Error>;
