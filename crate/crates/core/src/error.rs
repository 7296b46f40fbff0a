use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("tensor contains non-finite values")]
    NonFinite,

    #[error("factor matrix columns are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("cannot take {k} eigenpairs of a {n}x{n} matrix")]
    EigenRank { k: usize, n: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenFailure,

    #[error("rank {rank} exceeds extent {extent} in mode {mode}")]
    RankTooLarge { mode: usize, rank: usize, extent: usize },

    #[error("invalid hyperparameter: {0}")]
    Hyperparam(String),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("invalid labels: {0}")]
    Labels(String),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Failures while reading or writing on-disk artifacts.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: bad magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported version {found}")]
    VersionMismatch { path: PathBuf, found: u16 },

    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    TruncatedPayload { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}: truncated header")]
    TruncatedHeader { path: PathBuf },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
