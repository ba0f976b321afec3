use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants fall into three families that the command-line front end maps
/// to distinct exit codes: configuration problems, runtime invariant
/// violations, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("measure is not normalized: mass = {mass}")]
    NotNormalized { mass: f64 },

    #[error("measure has zero mass")]
    ZeroMass,

    #[error("means differ: {0} vs {1}")]
    MeanMismatch(f64, f64),

    #[error("distance between inputs is zero")]
    ZeroDistance,

    #[error("invariant violated at t = {t}: {what}")]
    Invariant { t: f64, what: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by a bad configuration or bad call arguments
    /// rather than by something that went wrong while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::Config(_) | Error::LengthMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
