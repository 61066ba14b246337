use std::path::PathBuf;

use thiserror::Error;
use wdvd_core::ErrorClass;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] wdvd_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn artifact(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Artifact {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 2 config, 3 data, 4 training, 5 artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Artifact { .. } => 5,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Training => 4,
                ErrorClass::Artifact => 5,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(wdvd_core::Error::NoFeaturesRetained).exit_code(), 3);
        assert_eq!(CliError::from(wdvd_core::Error::SingleClassTraining).exit_code(), 4);
        assert_eq!(CliError::artifact("m", "bad").exit_code(), 5);
        let fold = wdvd_core::Error::Fold {
            config: 0,
            fold: 1,
            source: Box::new(wdvd_core::Error::NonFiniteMargin { round: 3 }),
        };
        assert_eq!(CliError::from(fold).exit_code(), 4);
    }
}
