use thiserror::Error;

/// Errors produced by the conformal Good-Turing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training data")]
    EmptyTrainingData,

    #[error("insufficient reference data: need at least {needed} points, got {got}")]
    InsufficientReferenceData { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid label index {index} for a probability vector of length {len}")]
    InvalidLabelIndex { index: usize, len: usize },

    #[error("empty calibration scores")]
    EmptyScores,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hypothesis index k={k} out of range for n={n}")]
    FrequencyOutOfRange { k: usize, n: usize },

    #[error("no observed labels")]
    NoObservedLabels,

    #[error("degenerate policy: every swap configuration has zero probability")]
    DegeneratePolicy,

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("infeasible tuning grid: {0}")]
    InfeasibleGrid(String),

    #[error("baseline prediction set size must be at least 1")]
    EmptyBaseline,

    #[error("invalid experiment spec at `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("malformed CSV at row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
