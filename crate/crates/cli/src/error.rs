use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("unpaired dataset ids: {}", .0.join(", "))]
    Pairing(Vec<String>),

    #[error("{0}")]
    Model(bnnwidth::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) | CliError::Model(_) => 1,
            CliError::Io(_) => 2,
            CliError::Pairing(_) => 3,
        })
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<bnnwidth::Error> for CliError {
    fn from(e: bnnwidth::Error) -> Self {
        match e {
            bnnwidth::Error::Io(io) => CliError::Io(io.to_string()),
            bnnwidth::Error::Csv(csv) => CliError::Io(csv.to_string()),
            bnnwidth::Error::Unpaired(ids) => CliError::Pairing(ids),
            other => CliError::Model(other),
        }
    }
}
