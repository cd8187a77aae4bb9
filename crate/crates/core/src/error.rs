use thiserror::Error;

pub type Result<T, E = GpError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("inner low-rank system is not positive definite (pivot {pivot} = {value:e})")]
    InnerNotPositiveDefinite { pivot: usize, value: f64 },

    #[error("tridiagonal eigensolver did not converge within {iterations} sweeps")]
    ConvergenceFailure { iterations: usize },

    #[error("conjugate gradients broke down at iteration {iteration}: d'Ad = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("pivoted Cholesky met a negative pivot {value:e} at step {step}")]
    NegativePivot { step: usize, value: f64 },

    #[error("Ritz value {value:e} is not positive; log-determinant estimate undefined")]
    NonPositiveRitzValue { value: f64 },

    #[error("feature count must be even and at least 2, got {0}")]
    OddFeatureCount(usize),

    #[error("feature prefix {requested} outside 1..={available}")]
    PrefixOutOfRange { requested: usize, available: usize },

    #[error("empty truncation support: min {min} > max {max}")]
    EmptySupport { min: usize, max: usize },

    #[error("series supplier ran out after {consumed} terms without converging")]
    SupplierExhausted { consumed: usize },

    #[error("single-sample index {0} has zero probability")]
    ZeroProbabilitySample(usize),

    #[error("truncation index {j} outside support {min}..={max}")]
    OutsideSupport { j: usize, min: usize, max: usize },

    #[error("hyperparameter {name} must be positive and finite, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },

    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),

    #[error("unknown hyperparameter index {0}")]
    UnknownParam(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("dataset has no rows")]
    EmptyData,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GpError {
    fn from(e: std::io::Error) -> Self {
        GpError::Io(e.to_string())
    }
}

impl From<csv::Error> for GpError {
    fn from(e: csv::Error) -> Self {
        GpError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GpError {
    fn from(e: serde_json::Error) -> Self {
        GpError::InvalidConfig(e.to_string())
    }
}
