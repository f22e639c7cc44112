use std::path::PathBuf;

use crate::provider::ProviderError;
use crate::trace::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to parse input: {0}")]
    Parse(String),

    #[error("trace failed validation with {} violation(s)", .0.len())]
    InvalidTrace(Vec<Violation>),

    #[error("trace `{0}` did not fail; there is nothing to classify")]
    NotAFailure(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("the final error context needs {needed} characters, the excerpt budget is {budget}")]
    TraceTooLarge { needed: usize, budget: usize },

    #[error("no DOT renderer `{0}` found on PATH")]
    RendererNotFound(String),

    #[error("DOT renderer exited with {status}: {stderr}")]
    RendererFailed { status: String, stderr: String },

    #[error("input is empty")]
    EmptyInput,

    #[error(
        "trace_id sets differ (missing predictions: {missing_predictions:?}, missing gold: {missing_gold:?})"
    )]
    IdMismatch {
        missing_predictions: Vec<String>,
        missing_gold: Vec<String>,
    },

    #[error("no trace files found in {0}")]
    NoTraces(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "PARSE_ERROR",
            Error::InvalidTrace(_) => "INVALID_TRACE",
            Error::NotAFailure(_) => "NOT_A_FAILURE",
            Error::Provider(e) => e.code(),
            Error::TraceTooLarge { .. } => "TRACE_TOO_LARGE",
            Error::RendererNotFound(_) => "RENDERER_NOT_FOUND",
            Error::RendererFailed { .. } => "RENDERER_FAILED",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::IdMismatch { .. } => "ID_MISMATCH",
            Error::NoTraces(_) => "NO_TRACES",
            Error::Io { .. } => "IO_ERROR",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
