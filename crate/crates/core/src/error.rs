use std::path::PathBuf;

use thiserror::Error;

use crate::octree::NodeAddress;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid address {addr}: {reason}")]
    InvalidAddress { addr: NodeAddress, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("storage error at {context}: {source}")]
    Storage {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {structure}: {reason}")]
    Format { structure: String, reason: String },

    #[error("missing neighbors around {center}: {missing:?}")]
    MissingNeighbors {
        center: NodeAddress,
        missing: Vec<NodeAddress>,
    },

    #[error("region at level {level} is not covered by node {addr}")]
    Coverage { addr: NodeAddress, level: u32 },

    #[error("seed error: {0}")]
    Seeds(String),

    #[error("generation failed: {reason} (achieved foreground fraction {achieved:.5})")]
    Generation { reason: String, achieved: f64 },

    #[error("computation cancelled")]
    Cancelled,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn storage(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        Error::Storage {
            context: context.to_string(),
            source,
        }
    }

    pub(crate) fn format(structure: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            structure: structure.into(),
            reason: reason.into(),
        }
    }
}
