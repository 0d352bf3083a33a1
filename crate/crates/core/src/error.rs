use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} ({left:?} vs {right:?})")]
    DimensionMismatch {
        what: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is not positive definite (attempted jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("duplicate index {0}")]
    DuplicateIndex(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("objective is not finite at coordinate {coordinate}")]
    NonFiniteObjective { coordinate: usize },

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("linear map is rank deficient (smallest pivot {pivot:e})")]
    RankDeficient { pivot: f64 },

    #[error("event {index} at {location:?} lies outside the domain")]
    EventOutsideDomain { index: usize, location: Vec<f64> },

    #[error("intensity {value} exceeds the upper bound {bound} at {point:?}")]
    BoundViolation {
        point: Vec<f64>,
        value: f64,
        bound: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
