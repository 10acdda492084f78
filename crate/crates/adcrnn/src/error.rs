use std::path::Path;

use adcrnn_core::train::TrainError;

/// Failures surfaced by the command-line front end, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad flags or an inconsistent configuration (exit 2).
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input data (exit 3).
    #[error("data: {0}")]
    Data(String),
    /// Loss or gradients went non-finite during training (exit 4).
    #[error("numeric divergence: {0}")]
    Diverged(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Diverged(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        AppError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<adcrnn_core::error::Error> for AppError {
    fn from(e: adcrnn_core::error::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => AppError::Diverged(e.to_string()),
            TrainError::Invalid(inner) => inner.into(),
        }
    }
}
