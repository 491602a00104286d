use std::path::PathBuf;

use coreg_core::CoregError;

/// Exit status for user and configuration errors.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for numerical or model failures.
pub const EXIT_MODEL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoregError,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn core(context: impl Into<String>, source: CoregError) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    /// 2 for anything the user can fix in inputs or configuration, 3 when
    /// the model itself cannot be fitted.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } | CliError::Write { .. } => EXIT_USAGE,
            CliError::Core { source, .. } => match source {
                CoregError::Dimension(_)
                | CoregError::NonFinite { .. }
                | CoregError::NotSymmetric { .. }
                | CoregError::InsufficientSamples { .. }
                | CoregError::Parameter(_)
                | CoregError::Input(_)
                | CoregError::Spec(_) => EXIT_USAGE,
                CoregError::DegenerateVariance { .. }
                | CoregError::Decomposition(_)
                | CoregError::RankDeficient { .. }
                | CoregError::InsufficientDof { .. }
                | CoregError::NoModules
                | CoregError::NoStructure
                | CoregError::Singular(_)
                | CoregError::InsufficientTests { .. } => EXIT_MODEL,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
