use thiserror::Error;

/// Crate-wide error type. The CLI maps each variant class to a stable
/// process exit code: config/validation errors exit 2, numeric failures
/// exit 3, I/O failures exit 4.
#[derive(Debug, Error)]
pub enum GimbalError {
    /// Bad configuration or invalid argument values (exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// Numeric failure during computation: non-finite state, singular
    /// system, divergence (exit code 3).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// File system or serialization failure (exit code 4).
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed data in an input file (exit code 4).
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
}

impl GimbalError {
    pub fn config(msg: impl Into<String>) -> Self {
        GimbalError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        GimbalError::Numeric(msg.into())
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        GimbalError::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            GimbalError::Config(_) => 2,
            GimbalError::Numeric(_) => 3,
            GimbalError::Io(_) | GimbalError::Format { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, GimbalError>;
