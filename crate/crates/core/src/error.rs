use thiserror::Error;

use crate::measurement::VarianceConvention;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimensions must be positive (got m={m}, n={n})")]
    ZeroDimension { m: usize, n: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("signal must be nonzero")]
    ZeroSignal,

    #[error("{0} must be a nonzero vector")]
    ZeroVector(&'static str),

    #[error("noise level must be nonnegative (got {0})")]
    NegativeNoise(f64),

    #[error("inputs are not normalized: |<x,y>| = {dot} exceeds 1 beyond rounding")]
    NotNormalized { dot: f64 },

    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last Rayleigh quotients {previous}, {last})")]
    NonConvergence {
        iterations: usize,
        previous: f64,
        last: f64,
    },

    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("wrong variance convention: expected {expected:?}, got {got:?}")]
    WrongConvention {
        expected: VarianceConvention,
        got: VarianceConvention,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed ensemble file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
