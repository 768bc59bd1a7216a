use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid regularizer: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("degenerate direction: line-search denominator is {0:e}")]
    DegenerateDirection(f64),

    #[error(
        "weight matrix is singular (smallest eigenvalue {0:e}); exact subproblem solves need a \
         strictly concave regularizer such as trace_inverse, log_det or laplace"
    )]
    SingularWeight(f64),

    #[error("invalid observation set: {0}")]
    Observations(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
