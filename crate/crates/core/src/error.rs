use std::path::PathBuf;

/// Errors raised by the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate set: {0}")]
    DegenerateSet(String),
    #[error("empty point set")]
    EmptySet,
    #[error("kernel singularity: K is not defined at z = 0")]
    KernelSingularity,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("obstacle under-resolved: {0}")]
    UnderResolved(String),
    #[error("overlapping masks: {0} shared nodes")]
    OverlappingMasks(usize),
    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotConverged { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
