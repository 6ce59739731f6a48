use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("{0}: invalid embedding store: {1}")]
    Format(PathBuf, String),

    #[error("store is locked by another writer: {0}")]
    Locked(PathBuf),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("value {value} in `{doc_id}` is not encodable as {dtype}")]
    Unencodable {
        doc_id: String,
        value: f32,
        dtype: &'static str,
    },

    #[error("zero vector for `{0}`")]
    ZeroVector(String),

    #[error("query id mismatch: `{0}` vs `{1}`")]
    QueryMismatch(String, String),

    #[error("query `{0}` has no relevance judgments")]
    UnjudgedQuery(String),

    #[error("missing query embedding for `{query_id}` in engine `{engine}`")]
    MissingQueryEmbedding { engine: String, query_id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("scorer failed on query `{query_id}`: {message}")]
    Scorer { query_id: String, message: String },

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Errors caused by bad inputs or configuration, as opposed to failures
    /// while a stage was running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Scorer { .. } | Error::NonFiniteLoss(_) | Error::Locked(_)
        )
    }
}
