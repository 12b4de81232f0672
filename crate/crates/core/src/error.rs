use thiserror::Error;

/// Errors raised by the compiler library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not unitary (max |U^dag U - I| = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid device: {0}")]
    InvalidDevice(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("decomposition left off-diagonal mass {residual:.3e}")]
    ResidualMass { residual: f64 },

    #[error("target fidelity {tau} unreachable; best achievable is {best}")]
    UnreachableFidelity { tau: f64, best: f64 },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
