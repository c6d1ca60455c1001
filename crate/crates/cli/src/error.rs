use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration; `path` names the offending key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    /// Training or integration produced non-finite numbers.
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A file that does not follow its declared format.
    #[error("format error in {} at byte {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: u64, message: String },
    #[error(transparent)]
    Core(#[from] diresa_core::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit status: 2 config, 3 divergence, 4 I/O or file format,
    /// 1 for any other numerical failure.
    pub fn exit_code(&self) -> i32 {
        use diresa_core::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Divergence(_) => 3,
            CliError::Io { .. } | CliError::Format { .. } => 4,
            CliError::Core(e) if e.is_divergence() => 3,
            CliError::Core(E::Config(_) | E::Dimension { .. }) => 2,
            CliError::Core(_) => 1,
        }
    }
}
