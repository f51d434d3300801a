use thiserror::Error;

use crate::solver::SolverTrace;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum AnettError {
    /// Shapes or lengths of two quantities do not compose.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested configuration is not supported by this operation.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// The iteration produced a non-finite quantity; the trace collected so
    /// far is attached for post-mortem inspection.
    #[error("solver diverged at outer iteration {iter}")]
    Diverged { iter: usize, trace: SolverTrace },
    /// A serialized artifact (grid file, checkpoint, ...) failed to parse.
    #[error("malformed {kind}: {detail}")]
    Format { kind: &'static str, detail: String },
    /// A configuration file or value is invalid.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnettError>;

impl AnettError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        AnettError::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        AnettError::Domain(msg.into())
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        AnettError::Format {
            kind,
            detail: detail.into(),
        }
    }
}
