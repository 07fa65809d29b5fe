use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Time outside `[t0, t0 + Tp)` for a time-scaled quantity.
    #[error("time {t} outside the time-scale domain [{start}, {end})")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("objective `{objective}` does not carry {what}")]
    MissingMetadata {
        objective: String,
        what: &'static str,
    },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("mode not supported: {0}")]
    UnsupportedMode(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
