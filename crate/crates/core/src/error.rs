use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exponent p must be positive, got {0}")]
    InvalidExponent(String),

    #[error("non-finite value {value} at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too coarse on axis {axis}: {points} points, need at least {required}")]
    Underdetermined {
        axis: usize,
        points: usize,
        required: usize,
    },

    #[error("missing derivative of order {0:?}")]
    MissingDerivative(Vec<usize>),

    #[error("remainder bound is stated for p >= 1, got p = {0}")]
    ExponentBelowOne(f64),

    #[error("exact identity check failed: {0}")]
    IdentityFailure(String),

    #[error("every sample point was skipped")]
    AllSamplesSkipped,
}

pub type Result<T> = std::result::Result<T, Error>;
