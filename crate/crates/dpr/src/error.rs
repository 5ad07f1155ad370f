//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("preprocessing failed for record {record}: {reason}")]
    Preprocess { record: String, reason: String },

    #[error("conflicting interaction labels: {0}")]
    LabelConflict(String),

    #[error("graph construction: {0}")]
    Graph(String),

    #[error("training: {0}")]
    Train(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("corpus file: {0}")]
    CorpusFormat(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("pipeline stage `{stage}` cannot run: {reason}")]
    Stage { stage: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
