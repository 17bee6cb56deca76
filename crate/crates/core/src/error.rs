use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed {format} file: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("row count mismatch: {vectors} vectors but {metadata} metadata rows")]
    RowCountMismatch { vectors: usize, metadata: usize },

    #[error("vector {index} has zero norm")]
    ZeroVector { index: usize },

    #[error("metadata row {row}: field `{field}` is not a string")]
    NonStringValue { row: usize, field: String },

    #[error("metadata row {row}: undeclared field `{field}`")]
    UndeclaredField { row: usize, field: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("invalid adjacency at node {node}: {reason}")]
    InvalidAdjacency { node: usize, reason: String },

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
