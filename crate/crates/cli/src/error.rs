use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid input: {0}")]
    Invalid(whitney_core::Error),
    #[error("numeric failure: {0}")]
    Numeric(whitney_core::Error),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigRead { .. } | CliError::ConfigParse { .. } | CliError::Invalid(_) => 2,
            CliError::Numeric(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<whitney_core::Error> for CliError {
    fn from(e: whitney_core::Error) -> Self {
        use whitney_core::Error as E;
        match e {
            E::InvalidBox(_)
            | E::DimensionMismatch { .. }
            | E::InvalidExponent(_)
            | E::InvalidParameter(_)
            | E::Underdetermined { .. }
            | E::MissingDerivative(_)
            | E::ExponentBelowOne(_) => CliError::Invalid(e),
            _ => CliError::Numeric(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
