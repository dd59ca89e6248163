use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid scenario at `{field}`: {message}")]
    Parse { path: PathBuf, field: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] tcs_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for anything wrong with the scenario, 3 for failures while running it.
    pub fn exit_code(&self) -> u8 {
        use tcs_core::Error as E;
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid(_) => 2,
            CliError::Core(E::Construction(_) | E::Domain(_) | E::NoSpanningTree) => 2,
            CliError::Core(E::Numeric(_) | E::Integration { .. }) => 3,
            CliError::Write { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
