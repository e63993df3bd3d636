use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum KnhError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("rank error: requested rank {rank}, valid range is 1..={max}")]
    Rank { rank: usize, max: usize },

    #[error("singular matrix: {0}; use a positive ridge")]
    Singular(String),

    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate flat: {0}")]
    DegenerateFlat(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<KnhError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = KnhError> = std::result::Result<T, E>;

impl KnhError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        KnhError::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KnhError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        KnhError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &KnhError {
        match self {
            KnhError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
