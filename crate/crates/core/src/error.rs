use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("window error in {op}: time length {len} shorter than kernel {kernel}")]
    Window {
        op: &'static str,
        len: usize,
        kernel: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("corrupt file {path}: {detail} (at byte {offset})")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("insufficient data: need at least {required} time steps, got {got}")]
    InsufficientData { required: usize, got: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("offline mode: {} text(s) missing from the embedding cache", missing.len())]
    OfflineMiss { missing: Vec<String> },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// I/O or network transport failures.
    Io,
    /// Bad input, violated contract or inconsistent configuration.
    Validation,
    /// Offline embedding lookup missed the cache.
    OfflineMiss,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Transport(_) => ErrorKind::Io,
            Error::OfflineMiss { .. } => ErrorKind::OfflineMiss,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
