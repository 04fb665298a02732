use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("langevin chain diverged at step {step}")]
    Divergence { step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tape has already been consumed by a backward pass")]
    TapeConsumed,

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("length mismatch in {path}: expected {expected} bytes, found {found}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("checksum mismatch for sample {id} ({path})")]
    Checksum { id: usize, path: PathBuf },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("sample {id}: {source}")]
    Sample {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite parameters after epoch {epoch}, step {step}")]
    NonFiniteParams { epoch: usize, step: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn in_sample(self, id: usize) -> Self {
        Error::Sample {
            id,
            source: Box::new(self),
        }
    }
}
