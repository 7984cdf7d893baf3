use std::path::PathBuf;

use thiserror::Error;

/// Process exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for numerical failures (NaN / infinity in a forward or update).
pub const EXIT_NUMERICAL: i32 = 3;
/// Process exit code when the gradient-isolation audit fails.
pub const EXIT_GRADIENT_ISOLATION: i32 = 4;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported memory mode `{0}`: only `hopfield` is implemented")]
    UnsupportedMemoryMode(String),

    #[error("numerical failure in {location}: {detail}")]
    Numerical { location: String, detail: String },

    #[error("gradient isolation violated: {0}")]
    GradientIsolation(String),

    #[error("format error in {}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn numerical(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            location: location.into(),
            detail: detail.into(),
        }
    }

    /// Exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedMemoryMode(_) => EXIT_CONFIG,
            Error::Numerical { .. } => EXIT_NUMERICAL,
            Error::GradientIsolation(_) => EXIT_GRADIENT_ISOLATION,
            Error::InvalidInput(_) | Error::Format { .. } | Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
