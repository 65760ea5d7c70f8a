use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AleError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pole: {0}")]
    Pole(String),

    #[error("offset {magnitude:e} outside the near-base regime (limit {limit:e})")]
    OutOfRegime { magnitude: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range 0..={len}")]
    Index { index: usize, len: usize },

    #[error("path too short: need {needed} particles, have {have}")]
    Length { needed: usize, have: usize },

    #[error("point swallowed by the hull at t = {t}")]
    Swallowed { t: f64 },

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = AleError> = std::result::Result<T, E>;

impl From<std::io::Error> for AleError {
    fn from(e: std::io::Error) -> Self {
        AleError::Io(e.to_string())
    }
}

impl AleError {
    /// Process exit code: 2 for configuration and usage problems, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            AleError::Config(_) | AleError::Io(_) => 2,
            _ => 3,
        }
    }
}
