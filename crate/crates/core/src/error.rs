//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimensions, ranges or option combinations.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed or out-of-range input data (ids, ratings, propensities).
    #[error("data error: {0}")]
    Data(String),
    /// Training diverged or produced non-finite quantities.
    #[error("training error: {0}")]
    Train(String),
    /// Evaluation preconditions violated (single-class AUC, missing eval section).
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
