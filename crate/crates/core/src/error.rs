use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("no traces")]
    NoTraces,

    #[error("ragged trace {trace_id}: expected {expected} points, found {found}")]
    RaggedTrace {
        trace_id: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("motif length mismatch: expected {expected}, found {found}")]
    TauMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown node {0}")]
    UnknownNode(u32),

    #[error("negative sampling exhausted: wanted {wanted} pairs, {available} available")]
    NegativeSamplingExhausted { wanted: usize, available: usize },

    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::TauMismatch { .. } => ErrorKind::Usage,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NoTraces
            | Error::RaggedTrace { .. }
            | Error::Degenerate(_)
            | Error::UnknownNode(_) => ErrorKind::Data,
            Error::Shape(_) | Error::NonFinite(_) | Error::NegativeSamplingExhausted { .. } => {
                ErrorKind::Numeric
            }
            Error::Epoch { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}
