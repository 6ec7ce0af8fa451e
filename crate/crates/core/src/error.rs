use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the ordinal regression library.
#[derive(Debug, Error)]
pub enum CoralError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    Divergence { epoch: usize, batch: usize },

    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite loss while probing parameter {index}")]
    NonFiniteProbe { index: usize },

    #[error("bias subproblem has no finite optimum for tasks {tasks:?}")]
    UnboundedTasks { tasks: Vec<usize> },

    #[error("synthetic generator exhausted {0} retries without covering every rank")]
    RetriesExhausted(usize),

    #[error("split {0} would be empty")]
    EmptySplit(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoralError> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(CoralError::Dimension {
            what,
            expected,
            actual,
        })
    }
}
