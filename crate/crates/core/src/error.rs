use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0} contains no records")]
    Empty(String),

    #[error("duplicate rating for user {user}, item {item}")]
    DuplicateRating { user: String, item: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("value {value} exceeds the encodable magnitude {clamp}")]
    EncodeOverflow { value: f64, clamp: f64 },

    #[error("missing pair seed for parties ({low}, {high})")]
    MissingPairSeed { low: usize, high: usize },

    #[error("secret sharing: {0}")]
    Sharing(String),

    #[error("round {round} aborted: {survivors} surviving shareholders, threshold {threshold}")]
    TooManyDropouts {
        round: usize,
        survivors: usize,
        threshold: usize,
    },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("malformed wire message: {0}")]
    Wire(String),

    #[error("missing input files: {0}")]
    MissingFiles(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
