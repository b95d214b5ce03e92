use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("row {row} has near-zero norm ({norm:e})")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("row {row} is not unit-norm (norm {norm})")]
    NotUnitNorm { row: usize, norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic in {path}: expected \"M2E1\", found {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("unsupported format version {found} in {path}")]
    VersionMismatch { path: PathBuf, found: u32 },

    #[error("unsupported dtype {found} in {path}")]
    UnsupportedDtype { path: PathBuf, found: u32 },

    #[error("truncated payload in {path}: {what}")]
    Truncated { path: PathBuf, what: &'static str },

    #[error("id count mismatch in {path}: {ids} ids for {rows} rows")]
    IdCountMismatch {
        path: PathBuf,
        ids: usize,
        rows: usize,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("missing checkpoint tensor {0}")]
    MissingTensor(PathBuf),

    #[error("checkpoint tensor {name} has shape {found:?}, config expects {expected:?}")]
    CheckpointShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("training diverged: non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Errors caused by how the tool was invoked rather than by a failure
    /// while running. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_))
    }
}
