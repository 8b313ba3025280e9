//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },

    #[error("input locations are not strictly decreasing at index {index}")]
    NonDecreasingInput { index: usize },

    #[error("overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("covariance matrix is not positive definite (jitter ladder exhausted)")]
    NotPositiveDefinite,

    #[error("degenerate (zero) variance in Gaussian comparison")]
    DegenerateVariance,

    #[error("rank-one inverse update is singular")]
    SingularUpdate,

    #[error("optimization failed: {0}")]
    OptimizationFailed(&'static str),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dataset contains no observations")]
    EmptyDataset,

    #[error("bad file schema: {0}")]
    SchemaError(String),

    #[error("parse error at row {row}, column `{col}`: {msg}")]
    ParseError {
        row: usize,
        col: String,
        msg: String,
    },

    #[error("bad configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
