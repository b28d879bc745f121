use std::path::Path;

use crate::config::FieldError;

/// Exit code for validation and verification failures.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for IO and configuration errors.
pub const EXIT_IO: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),

    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] logicforge_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use logicforge_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Output(_) => EXIT_IO,
            CliError::Invalid(_) => EXIT_FAILURE,
            CliError::Core(e) => match e {
                E::Io(_) | E::Csv(_) | E::Dataset(_) | E::Checkpoint(_) | E::Netlist(_) => EXIT_IO,
                _ => EXIT_FAILURE,
            },
        }
    }
}
