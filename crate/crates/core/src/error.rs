use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix is not positive definite: pivot {pivot:e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("parameters violate stationarity: {0}")]
    NonStationary(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sampler failed at flat index {index}: {source}")]
    Coordinate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("EM iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Invalid(_)
            | Error::Parse { .. }
            | Error::Unsupported(_)
            | Error::NonStationary(_) => 2,
            Error::Io(_) => 4,
            Error::Iteration { source, .. } | Error::Coordinate { source, .. } => match source.exit_code() {
                2 | 4 => source.exit_code(),
                _ => 3,
            },
            _ => 3,
        }
    }
}
