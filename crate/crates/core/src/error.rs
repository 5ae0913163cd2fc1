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

    #[error("{path}:{line}: duplicate rating for user {user_id}, item {item_id}")]
    DuplicateRating {
        path: PathBuf,
        line: usize,
        user_id: u32,
        item_id: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("recommender #{index} ({spec}) failed: {source}")]
    Recommender {
        index: usize,
        spec: String,
        #[source]
        source: Box<Error>,
    },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
