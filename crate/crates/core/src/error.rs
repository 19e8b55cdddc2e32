use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negative entry {value} at ({row}, {col}); input must be nonnegative")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("zero-norm vector at row {0}")]
    ZeroNorm(usize),

    #[error("correlation undefined: {0} has zero variance")]
    CorrelationUndefined(&'static str),

    #[error("{algorithm} did not converge after {iterations} iterations")]
    NoConvergence {
        algorithm: &'static str,
        iterations: usize,
    },

    #[error("non-finite head output for row {0}")]
    NonFiniteOutput(usize),

    #[error("npy: missing magic string")]
    NpyMagic,

    #[error("npy: unsupported format version {0}.{1}")]
    NpyVersion(u8, u8),

    #[error("npy: unsupported dtype '{0}'")]
    NpyDtype(String),

    #[error("npy: fortran-ordered arrays are not supported")]
    NpyOrder,

    #[error("npy: malformed header: {0}")]
    NpyHeader(String),

    #[error("npy: truncated payload, expected {expected} bytes, found {found}")]
    NpyTruncated { expected: usize, found: usize },

    #[error("head protocol error (request {id:?}): {message}")]
    Protocol { id: Option<u64>, message: String },

    #[error("head protocol timeout waiting for request {id}")]
    Timeout { id: u64 },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for the failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NegativeEntry { .. } => "negative_entry",
            Error::ZeroNorm(_) => "zero_norm",
            Error::CorrelationUndefined(_) => "correlation_undefined",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NonFiniteOutput(_) => "non_finite_output",
            Error::NpyMagic => "npy_magic",
            Error::NpyVersion(..) => "npy_version",
            Error::NpyDtype(_) => "npy_dtype",
            Error::NpyOrder => "npy_order",
            Error::NpyHeader(_) => "npy_header",
            Error::NpyTruncated { .. } => "npy_truncated",
            Error::Protocol { .. } => "protocol",
            Error::Timeout { .. } => "timeout",
            Error::File { .. } => "file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
