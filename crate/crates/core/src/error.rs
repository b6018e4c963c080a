use thiserror::Error;

/// Errors surfaced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid article spec at {path}: {reason}")]
    InvalidArticle { path: String, reason: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("document `{0}` is not part of the index")]
    UnknownDocument(String),

    #[error("case `{0}` has no usable holding text")]
    EmptyHolding(String),

    #[error("case `{case_id}` has no similarity profile for article `{article_id}`")]
    MissingProfile { case_id: String, article_id: String },

    #[error("case `{0}` has an empty article set")]
    EmptyArticleSet(String),

    #[error("no positive available for anchor `{0}`")]
    NoPositive(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("missing weight for pair ({0}, {1})")]
    MissingWeight(String, String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}; last good checkpoint: {last_checkpoint}")]
    Diverged { step: usize, last_checkpoint: String },

    #[error("missing qrels for queries: {0:?}")]
    MissingQrels(Vec<String>),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
