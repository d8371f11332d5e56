//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature `{feature}`: {reason}")]
    Feature { feature: String, reason: String },

    #[error("oracle transport failure after {attempts} attempts: {reason}")]
    Transport { attempts: u32, reason: String },

    #[error("oracle protocol error: {0}")]
    Protocol(String),

    #[error("sample {id} deferred: {reason}")]
    Deferred { id: String, reason: String },

    #[error("non-finite importance ratio for sample {id}")]
    NonFiniteRatio { id: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures that should be retried by the caller rather than
    /// treated as a data-quality outcome (consensus/reasoning pipelines).
    pub fn is_deferred(&self) -> bool {
        matches!(self, Error::Deferred { .. })
    }
}
