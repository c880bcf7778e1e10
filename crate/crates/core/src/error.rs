use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by mesh construction, assembly, the step solvers and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate element {element}: area {area:e} below threshold {threshold:e}")]
    DegenerateElement {
        element: usize,
        area: f64,
        threshold: f64,
    },

    #[error("boundary is not a single closed loop: {0}")]
    DisconnectedBoundary(String),

    #[error("no free degrees of freedom remain after applying constraints")]
    EmptyFreeDofs,

    #[error("stiffness factorization failed (constraints do not remove all rigid modes?): {0}")]
    Factorization(String),

    #[error("deformed boundary edge {edge} has zero length; perimeter gradient undefined")]
    ZeroLengthEdge { edge: usize },

    #[error("infeasible mass balance: {0}")]
    Infeasible(String),

    #[error("projection failed to converge: {0}")]
    Projection(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
