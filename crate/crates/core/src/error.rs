use std::fmt;

/// Errors produced by the denoising pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument or configuration value is outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Two arrays that must agree in shape do not.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: Dims, actual: Dims },

    /// A non-finite value appeared during training or integration.
    #[error("{stage} diverged at {unit} {index}")]
    Divergence {
        stage: &'static str,
        unit: &'static str,
        index: usize,
    },

    /// A file could not be decoded.
    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }

    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Shape { .. } => "shape",
            Error::Divergence { .. } => "divergence",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

/// Height/width pair used in shape errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims(pub usize, pub usize);

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
