use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("point set needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("row_and_column mode needs n1 == n2 (got n1 = {n1}, n2 = {n2})")]
    NotSquare { n1: usize, n2: usize },

    #[error("vector is not feasible for the relaxation: block {block} sums to {sum}")]
    Infeasible { block: usize, sum: f64 },

    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
