use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the simulator can report, grouped by where it originates.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("search budget of {budget} nodes exhausted (best objective so far: {best:?})")]
    Resource { budget: usize, best: Option<u64> },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("analytics error: {0}")]
    Analytics(String),

    #[error("optimization did not converge (final gradient-mapping norm {grad_norm:e})")]
    Optimization { grad_norm: f64 },

    #[error("missing traffic samples for {ap}: {missing:?}")]
    Gap { ap: String, missing: Vec<String> },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("emission error: {0}")]
    Emission(String),

    #[error("at {coords}: {source}")]
    Sweep {
        coords: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// runtime failure. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::Parse { .. } => true,
            Error::Sweep { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
