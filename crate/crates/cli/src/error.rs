use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit codes.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: baryflow::Error,
    },

    #[error(transparent)]
    Core(#[from] baryflow::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches the file an input error came from.
    pub fn input(path: &Path, source: baryflow::Error) -> Self {
        match source {
            baryflow::Error::Io(e) => Self::io(path, e),
            source => CliError::Input {
                path: path.to_path_buf(),
                source,
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Input { source, .. } | CliError::Core(source) => match source {
                baryflow::Error::Io(_) => EXIT_IO,
                e if e.is_numeric() => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}
