use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: occface::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 2 for bad input, 3 for failures inside a computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Core { source, .. } if source.is_input_error() => 2,
            CliError::Core { .. } => 3,
        }
    }
}

/// Attaches the name of the module an error came from.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> CliResult<T>;
}

impl<T> InModule<T> for occface::Result<T> {
    fn in_module(self, module: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Core { module, source })
    }
}
