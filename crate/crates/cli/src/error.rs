use std::path::Path;

use thiserror::Error;

/// Failure of a CLI run, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(panelci_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 success, 2 configuration, 3 data (and I/O), 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            context: path.display().to_string(),
            source,
        }
    }

    /// Prefixes the message with `context` (file name, line, ...).
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{context}: {m}")),
            CliError::Io { context: c, source } => CliError::Io {
                context: format!("{context}: {c}"),
                source,
            },
            numerical => numerical,
        }
    }
}

impl From<panelci_core::Error> for CliError {
    fn from(e: panelci_core::Error) -> Self {
        use panelci_core::Error as E;
        match e {
            e if e.is_numerical() => CliError::Numerical(e),
            E::Parameter(m) => CliError::Config(m),
            E::Replication { index, source } => match *source {
                E::Parameter(m) => CliError::Config(format!("replication {index}: {m}")),
                other => CliError::Data(format!("replication {index}: {other}")),
            },
            other => CliError::Data(other.to_string()),
        }
    }
}
