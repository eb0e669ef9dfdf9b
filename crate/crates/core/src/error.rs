use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A numerical procedure failed (factorization, divergence, overflow).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Training aborted because the loss became non-finite.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A checkpoint or artifact file is malformed.
    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
