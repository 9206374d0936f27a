use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid rank: {0}")]
    InvalidRank(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Jacobi SVD did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("negative singular value {value} at index {index}")]
    NegativeSingularValue { index: usize, value: f64 },

    #[error("training diverged at step {step} (loss {loss:e})")]
    Divergence { step: usize, loss: f64 },

    #[error("tensor `{tensor}`: blob {path} has {actual} bytes, expected {expected}")]
    BlobSizeMismatch {
        tensor: String,
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("tensor `{tensor}`: missing blob {path}")]
    MissingBlob { tensor: String, path: PathBuf },

    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures, as opposed to bad input or storage problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NoConvergence { .. }
                | Error::NegativeSingularValue { .. }
                | Error::Divergence { .. }
        )
    }

    /// Errors raised while reading or writing checkpoint storage.
    pub fn is_storage(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Manifest(_)
                | Error::BlobSizeMismatch { .. }
                | Error::MissingBlob { .. }
                | Error::DuplicateName(_)
                | Error::UnsupportedVersion(_)
                | Error::InvalidCheckpoint(_)
        )
    }
}
