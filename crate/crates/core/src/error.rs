use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum DeaError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("insufficient edges: need at least {needed}, graph has {available}")]
    InsufficientEdges { needed: usize, available: usize },

    #[error("cannot sample {requested} negatives: only {available} candidate pairs")]
    Capacity { requested: usize, available: usize },

    #[error("eigensolver did not converge: residual {residual:e} after {iterations} iterations")]
    Convergence { residual: f64, iterations: usize },

    #[error("generator produced an empty graph after {attempts} attempts")]
    EmptyGraph { attempts: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint incompatible: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DeaError>;

impl DeaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DeaError::Io {
            path: path.into(),
            source,
        }
    }
}
