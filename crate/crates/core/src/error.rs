use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by the toolkit.
///
/// `InvalidParameter` marks misuse that a caller can fix (bad geometry,
/// out-of-range coefficients); everything else reports a numerical method that
/// did not reach its advertised accuracy, so callers can distinguish "fix your
/// input" from "the solve itself failed".
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("nonlinear iteration failed: {0}")]
    Nonlinear(String),

    #[error("potential well is degenerate: {0}")]
    Degenerate(String),

    #[error("winding number unreliable: {0}")]
    DegreeUnreliable(String),

    #[error("gradient flow stalled: {0}")]
    Stalled(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error indicates bad caller input rather than a failed
    /// numerical method.
    #[must_use]
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidParameter(_))
    }
}
