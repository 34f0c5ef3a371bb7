use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
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

    #[error("{path}:{line}: node id {value} does not fit the node index type")]
    IdOverflow {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("{path}:{line}: unknown node id {id} (graph has {num_nodes} nodes)")]
    UnknownNode {
        path: PathBuf,
        line: usize,
        id: u64,
        num_nodes: usize,
    },

    #[error("{path}:{line}: duplicate row for node {id}")]
    DuplicateNode { path: PathBuf, line: usize, id: u64 },

    #[error("{path}: expected {expected} rows, found {found}")]
    RowCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: no entry for node {id}")]
    MissingNode { path: PathBuf, id: usize },

    #[error("{path}:{line}: non-finite value in column {column}")]
    NonFinite {
        path: PathBuf,
        line: usize,
        column: usize,
    },

    #[error("{path}:{line}: negative class id {value}")]
    NegativeClass {
        path: PathBuf,
        line: usize,
        value: i64,
    },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("node {node} out of range for a graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "power iteration did not converge after {iterations} iterations (L1 residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("unsupported split file version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("node count mismatch: expected {expected}, found {found}")]
    NodeCountMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("malformed split: {0}")]
    MalformedSplit(String),

    #[error("{0} is empty")]
    EmptySet(String),

    #[error("AUROC needs both positive and negative observations")]
    SingleClass,

    #[error("accuracy drop is undefined for zero in-distribution accuracy")]
    ZeroAccuracy,

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
