use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside window [{first}, {last}]")]
    TimeOutOfRange { t: f64, first: f64, last: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no events")]
    NoEvents,

    #[error("singular warp: {0}")]
    SingularWarp(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("no valid ground-truth pixels")]
    EmptyValidMask,

    #[error("degenerate window: identity-warp IWE has zero variance")]
    DegenerateWindow,

    #[error("receding or parallel motion, TTC undefined (h_z = {0})")]
    UndefinedTtc(f64),

    #[error("objective infeasible at every evaluated point")]
    Infeasible,

    #[error("scene left the frame")]
    SceneLeftFrame,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn singular(what: impl Into<String>) -> Self {
        Error::SingularWarp(what.into())
    }

    pub(crate) fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidParameter(what.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
