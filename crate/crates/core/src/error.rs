use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("question {0} has no gold mention span")]
    MissingAnnotation(u32),

    #[error("knowledge base is empty")]
    EmptyKb,

    #[error("candidate set of question {0} does not contain the gold pair")]
    NoGold(u32),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("exemplar for question {0} already carries snapshot labels")]
    LabelsFrozen(u32),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("missing checkpoint for phase {0}")]
    MissingCheckpoint(usize),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
