use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] boxsim_core::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read detections from {path}: {reason}")]
    Detections { path: PathBuf, reason: String },
}

impl CliError {
    /// 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_configuration() => 2,
            CliError::Core(_) | CliError::Write { .. } | CliError::Detections { .. } => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(
            CliError::from(ConfigError::MissingNormParams).exit_code(),
            2
        );
        let config = boxsim_core::Error::InvalidAnchorSpec("x".into());
        assert_eq!(CliError::from(config).exit_code(), 2);
        assert_eq!(CliError::from(boxsim_core::Error::NoPairs).exit_code(), 3);
        assert_eq!(
            CliError::from(boxsim_core::Error::DuplicateImageId(1)).exit_code(),
            3
        );
    }
}
