use thiserror::Error;

/// Failures mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config, invalid parameters: exit 1.
    #[error("{0}")]
    Usage(String),
    /// Step-size or positivity guard tripped during a run: exit 2.
    #[error("numerical guard: {0}")]
    Guard(String),
    /// Reading or writing files: exit 3.
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Guard(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<monqfi_core::Error> for CliError {
    fn from(err: monqfi_core::Error) -> Self {
        match err {
            monqfi_core::Error::NumericalGuard(msg) => CliError::Guard(msg),
            other => CliError::Usage(other.to_string()),
        }
    }
}
