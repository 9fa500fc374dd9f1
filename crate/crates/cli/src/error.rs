use std::path::{Path, PathBuf};

/// Errors of the command-line layer. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file or flag value.
    #[error("format error: {0}")]
    Format(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] reshare_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn from_csv(path: impl AsRef<Path>, err: csv::Error) -> Self {
        if !err.is_io_error() {
            return CliError::Format(format!("{}: {err}", path.as_ref().display()));
        }
        match err.into_kind() {
            csv::ErrorKind::Io(e) => CliError::io(path, e),
            kind => CliError::Format(format!("{}: {kind:?}", path.as_ref().display())),
        }
    }

    pub fn from_json(path: impl AsRef<Path>, err: serde_json::Error) -> Self {
        if err.is_io() {
            CliError::io(path, std::io::Error::other(err))
        } else {
            CliError::Format(format!("{}: {err}", path.as_ref().display()))
        }
    }

    /// 1 for I/O failures, 2 for usage, format and data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        }
    }
}
