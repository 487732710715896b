use std::path::PathBuf;

/// Exit status for bad invocations, configs and input files.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running an experiment.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}:{column}: {message}")]
    ConfigSyntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Input(cfu_core::Error),
    #[error(transparent)]
    Core(#[from] cfu_core::Error),
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigSyntax { .. } | CliError::Input(_) => EXIT_USAGE,
            CliError::Core(_) | CliError::Output { .. } => EXIT_FAILURE,
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
