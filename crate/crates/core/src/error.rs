use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants mirror the failure classes callers are expected to branch on:
/// bad user input (`Domain`, `Parameter`, `Shape`, `Format`), numerical
/// breakdown (`Numerical`) and an exhausted search (`NotFound`).
#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the promise domain of a partial function was queried.
    #[error("input {0} is outside the function domain")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("malformed record: {0}")]
    Format(String),

    /// The search plan was exhausted without certifying any cell.
    #[error("no exact algorithm found within the search plan (heuristic failure, not a lower bound)")]
    NotFound,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
