use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("matrix has no eigenvalue above the rank tolerance {tolerance:.3e}")]
    ZeroMatrix { tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("rank {rank} outside [1, {dim}]")]
    BadRank { rank: usize, dim: usize },

    #[error("requested rank {requested} exceeds numeric rank {available}")]
    RankTooLarge { requested: usize, available: usize },

    #[error("sample covariance has no positive eigenvalue")]
    DegenerateSample,

    #[error("{estimator}: rank condition {condition} violated (n = {n}, r = {r})")]
    RankConditionViolated {
        estimator: String,
        condition: &'static str,
        n: usize,
        r: usize,
    },

    #[error("estimator {estimator} belongs to task {actual}, not {expected}")]
    TaskMismatch {
        estimator: String,
        expected: String,
        actual: String,
    },

    #[error("diagonal entry {index} is {value:.3e}, not invertible")]
    SingularDiagonal { index: usize, value: f64 },

    #[error("unsupported estimator family: {0}")]
    UnsupportedFamily(String),

    #[error("reference mean loss {0} is not positive")]
    NonpositiveReference(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("dates are not ascending at line {line}")]
    UnsortedDates { line: u64 },

    #[error("unknown estimator id `{0}`")]
    UnknownEstimator(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_mismatch(expected: impl ToString, actual: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
