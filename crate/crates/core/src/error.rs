use std::path::PathBuf;

use crate::optimizer::Trace;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes. The CLI maps each family to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Io,
    Divergence,
    DegenerateGeometry,
    Data,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Config => 2,
            ErrorFamily::Io => 3,
            ErrorFamily::Divergence => 4,
            ErrorFamily::DegenerateGeometry => 5,
            ErrorFamily::Data => 6,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid proportions: {0}")]
    InvalidProportions(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),

    #[error("optimization diverged at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        trace: Box<Trace>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::InvalidProportions(_) | Error::Config(_) | Error::InsufficientCorpus(_) => {
                ErrorFamily::Config
            }
            Error::Io { .. } => ErrorFamily::Io,
            Error::Divergence { .. } => ErrorFamily::Divergence,
            Error::DegenerateGeometry(_) | Error::DegenerateAlignment(_) => {
                ErrorFamily::DegenerateGeometry
            }
            Error::Shape(_) | Error::Format { .. } => ErrorFamily::Data,
        }
    }
}
