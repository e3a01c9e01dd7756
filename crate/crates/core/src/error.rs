use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid month: {0}")]
    InvalidMonth(String),
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("invalid privacy parameters: {0}")]
    InvalidParams(String),
    #[error("invalid noise scale {0}")]
    InvalidScale(f64),
    #[error("mechanism precondition failed: {0}")]
    Precondition(String),
    #[error("{path}:{line}: {message}")]
    MalformedRow { path: String, line: u64, message: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
