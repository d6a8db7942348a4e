use std::path::PathBuf;

use pmdss_service::{ConfigInvalid, ServeError, ServiceError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{code}: {0}", code = .0.code())]
    Service(#[from] ServiceError),
    #[error("validation_failed: {}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{error}: {message} (HTTP {status})")]
    Remote {
        status: u16,
        error: String,
        message: String,
    },
    #[error("cannot reach {url}: {source}")]
    Transport { url: String, source: reqwest::Error },
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.into())
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INVESTIGATE: u8 = 3;

impl CliError {
    /// 2 for bad input or a state the operation does not allow, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Service(e) if e.is_client_error() => EXIT_INPUT,
            CliError::Service(_) => EXIT_INTERNAL,
            CliError::Input { .. } | CliError::Config(_) | CliError::Usage(_) => EXIT_INPUT,
            CliError::Serve(ServeError::Service(e)) if !e.is_client_error() => EXIT_INTERNAL,
            CliError::Serve(ServeError::Io(_)) => EXIT_INTERNAL,
            CliError::Serve(_) => EXIT_INPUT,
            CliError::Remote { status, .. } if (400..500).contains(status) => EXIT_INPUT,
            CliError::Remote { .. } | CliError::Transport { .. } | CliError::Output(_) => {
                EXIT_INTERNAL
            }
        }
    }
}
