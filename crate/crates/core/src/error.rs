use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system `{0}` (expected one of: double-gyre, doubling, baker, rotation, identity)")]
    UnknownSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("malformed velocity field: {0}")]
    MalformedField(String),

    #[error("partition dimension {axis} has zero cells")]
    ZeroDimension { axis: usize },

    #[error("invalid sample count {samples}: {reason}")]
    InvalidSampleCount { samples: usize, reason: String },

    #[error("sample of cell {row} left the domain under the `reject` policy")]
    Escaped { row: usize },

    #[error("every sample of cell {row} left the domain; cannot renormalize")]
    RowFullyEscaped { row: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },

    #[error("vector sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("cell index {index} out of range for {n} cells")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid placement problem: {0}")]
    InvalidProblem(String),

    #[error("exact search needs {combinations} combinations, above the limit of {limit}")]
    InstanceTooLarge { combinations: u128, limit: u128 },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
