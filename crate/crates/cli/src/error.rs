use std::path::Path;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const VERDICT_FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const BLOW_UP: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] spde_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(spde_core::Error::BlowUp { .. }) => exit::BLOW_UP,
            _ => exit::CONFIG,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
