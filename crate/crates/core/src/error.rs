use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed OFF header: {0}")]
    MalformedHeader(String),
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("index {index} out of range for {len} vertices (line {line})")]
    IndexOutOfRange { index: usize, len: usize, line: usize },
    #[error("degenerate face {0:?}")]
    DegenerateFace([usize; 3]),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("cannot coarsen beyond level {level}: graph has {nodes} node(s)")]
    HierarchyTooDeep { level: usize, nodes: usize },
    #[error("target class {target} at node {node} is excluded by the class mask")]
    TargetOutsideMask { node: usize, target: usize },
    #[error("label {label} is outside the category label set")]
    LabelOutsideCategory { label: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
