use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support size {gamma} out of range [1, {max}]")]
    GammaOutOfRange { gamma: usize, max: usize },

    #[error("exhaustive search over {count} supports exceeds the limit of {limit}; reduce the instance")]
    SearchTooLarge { count: u128, limit: u128 },

    #[error("perfect fit; HBIC undefined")]
    PerfectFit,

    #[error(
        "coordinate descent did not converge at lambda = {lambda} after {sweeps} sweeps \
         (max KKT violation {max_violation:.3e})"
    )]
    NotConverged {
        lambda: f64,
        sweeps: usize,
        max_violation: f64,
        last_iterate: Vec<f64>,
    },

    #[error("{context}: {source}")]
    Tagged {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("all support sizes failed: {0:?}")]
    SweepFailed(Vec<(usize, String)>),

    #[error("cross-validation: {0}")]
    CrossValidation(String),

    #[error("method {method} failed on {failed} of {total} replications: {first_error}")]
    TooManyFailures {
        method: String,
        failed: usize,
        total: usize,
        first_error: String,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("state {state}: expected {expected} rows, found {found}")]
    StateCount {
        state: i64,
        expected: usize,
        found: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn tagged(self, context: impl Into<String>) -> Error {
        Error::Tagged {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
