use thiserror::Error;

/// Error type shared by every subsystem of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// State blow-up during simulation; carries the step index and time.
    #[error("simulation diverged at step {step} (t = {t:.4} s): {what}")]
    Divergence { step: usize, t: f64, what: String },

    #[error("training diverged at epoch {epoch}: {what}")]
    Training { epoch: usize, what: String },

    #[error("identifier diverged: {0}")]
    IdentifierDivergence(String),

    /// A stability-analysis inequality does not hold for the supplied constants.
    #[error("stability condition failed: {0}")]
    ConditionFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
