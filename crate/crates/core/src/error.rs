use std::path::PathBuf;

use thiserror::Error;

use crate::discretization::Point;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("support-coverage error at ({:.6e}, {:.6e}): {detail}", point[0], point[1])]
    SupportCoverage { point: Point, detail: String },

    #[error("inadmissible state at ({:.6e}, {:.6e}): {detail}", point[0], point[1])]
    Inadmissible { point: Point, detail: String },

    #[error("incompressible material (poisson ratio 0.5) is not supported")]
    IncompressibilityUnsupported,

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema error in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error after peeling off any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by user input rather than by the solve itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_)
                | Error::Argument(_)
                | Error::Schema { .. }
                | Error::IncompressibilityUnsupported
        )
    }
}
