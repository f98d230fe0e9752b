use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus not found at {path}: {reason}")]
    CorpusNotFound { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("frame model: {0}")]
    Model(String),

    #[error("build of {case_id} failed (see build log)")]
    BuildFailed { case_id: String, log: String },

    #[error("toolchain {toolchain} does not support {flags}")]
    UnsupportedVariant {
        toolchain: String,
        flags: String,
        diagnostics: String,
    },

    #[error("runner: {0}")]
    Runner(String),

    #[error("aggregation conflict: duplicate record for {0}")]
    AggregationConflict(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed {what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(what: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            what: what.into(),
            source,
        }
    }
}
