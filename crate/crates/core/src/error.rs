use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("undefined WER denominator: reference transcript is empty")]
    EmptyReference,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("version {version} does not exist (record has {available} versions)")]
    BadVersion { version: usize, available: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("training set too small: {got} records (need at least {need})")]
    TooSmall { got: usize, need: usize },

    #[error("confident() needs at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
