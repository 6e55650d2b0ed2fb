use std::path::Path;

use wavegan_core::audio::AudioError;
use wavegan_core::eval::EvalError;
use wavegan_core::train::TrainError;

/// A failed command, classified by its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Exit code 2: unreadable, malformed or insufficient input.
    #[error("{0}")]
    Data(String),
    /// Exit code 3.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn read(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("cannot read {}: {e}", path.display()))
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Param(_)
            | TrainError::EmptyData
            | TrainError::Audio(_)
            | TrainError::Config(_)
            | TrainError::Checkpoint { .. } => CliError::Data(e.to_string()),
            TrainError::Domain(_)
            | TrainError::Model(_)
            | TrainError::Tensor(_)
            | TrainError::NonFinite { .. }
            | TrainError::Io(_) => CliError::Internal(e.to_string()),
        }
    }
}
