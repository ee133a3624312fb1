//! Crate-wide error type.

/// Errors surfaced by tensor ops, blocks, the network, and artifact I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes do not line up for the requested operation.
    #[error("{op}: dimension error: {detail}")]
    Dim { op: &'static str, detail: String },

    /// A value violated a domain precondition (e.g. non-positive step size).
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },

    /// An invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A malformed file, reported with the byte offset of the first defect.
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
