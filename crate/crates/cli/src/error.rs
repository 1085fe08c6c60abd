use std::io;

use cookielab_core::estimators::EstimatorError;
use cookielab_core::trajectory::SimError;
use cookielab_core::{EnvironmentError, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("condition violated: {0}")]
    Condition(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("estimator failed: {0}")]
    Estimator(#[from] EstimatorError),
}

impl CliError {
    /// 0 ok, 1 condition violation or runtime failure, 2 config error,
    /// 3 missing input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Condition(_)
            | CliError::Io { .. }
            | CliError::Sim(_)
            | CliError::Estimator(_) => 1,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.as_ref().display().to_string();
        move |source| CliError::Io { path, source }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ConditionB { .. }
            | ModelError::ConditionC { .. }
            | ModelError::ConditionE { .. } => CliError::Condition(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EnvironmentError> for CliError {
    fn from(e: EnvironmentError) -> Self {
        match e {
            EnvironmentError::RevisitDrift { .. } => CliError::Condition(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
