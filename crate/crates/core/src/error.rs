use std::path::PathBuf;

use crate::interval::IntervalError;

/// Errors produced by the certification engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Interval(#[from] IntervalError),

    #[error("expected {expected} transformation parameters, got {actual}")]
    ParamCount { expected: usize, actual: usize },

    #[error("invalid parameter box: {0}")]
    InvalidBox(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("unknown transformation `{0}`")]
    UnknownTransform(String),

    #[error("unknown max-pool strategy `{0}`")]
    UnknownStrategy(String),

    #[error("invalid split granularity: {0}")]
    InvalidGranularity(String),

    #[error("layer {layer}: shape mismatch: {message}")]
    ShapeMismatch { layer: u32, message: String },

    #[error("layer {layer}: unsupported layer kind `{kind}`")]
    UnsupportedLayer { layer: u32, kind: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("layer {layer}: batch norm has no foldable predecessor")]
    NotFoldable { layer: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file exceeds the {limit}-byte size cap")]
    TooLarge { path: PathBuf, limit: u64 },

    #[error("numerical overflow during propagation at layer {layer}")]
    Overflow { layer: u32 },

    #[error("max-pool relaxation invariant violated: {0}")]
    PoolInvariant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
