use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown label(s): {}", .0.join(", "))]
    UnknownLabels(Vec<String>),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("malformed RST tree at node {node}: {message}")]
    MalformedTree { node: String, message: String },

    #[error("relation name(s) missing from name map: {}", .0.join(", "))]
    UnknownRelation(Vec<String>),

    #[error("cosine similarity of a zero-norm vector ({0})")]
    ZeroNorm(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label id {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("translation failed: {0}")]
    Translation(String),

    #[error("augmentation aborted: {failed} of {total} translations failed")]
    AugmentationAborted { failed: usize, total: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("label embeddings are not comparable: {0}")]
    Incomparable(String),

    #[error("relabeled data shares document ids with dev/test: {}", .0.join(", "))]
    Contamination(Vec<String>),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Translation(_) | Error::AugmentationAborted { .. } | Error::Diverged(_)
        )
    }
}
