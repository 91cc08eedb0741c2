use thiserror::Error;

/// Errors across the toolkit. Parse/value errors carry the 1-based line
/// number of the offending input row.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value at line {line}: {msg}")]
    Value { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate panel: {0}")]
    DegeneratePanel(String),

    #[error("matching constraint infeasible: {0}")]
    Constraint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
