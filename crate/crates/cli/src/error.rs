use vqlens::Error;
use vqlens_study::StudyError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] Error),
    #[error("{0}")]
    Study(#[from] StudyError),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_MISSING_INPUT: u8 = 2;
pub const EXIT_INVALID_CONFIG: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Missing(_) => EXIT_MISSING_INPUT,
            CliError::Config(_) => EXIT_INVALID_CONFIG,
            CliError::Io(_) => EXIT_MISSING_INPUT,
            CliError::Study(StudyError::MissingInput(_)) => EXIT_MISSING_INPUT,
            CliError::Study(_) => EXIT_INVALID_CONFIG,
            CliError::Core(e) => match e {
                Error::Io { .. } | Error::Format { .. } | Error::Malformed { .. } => EXIT_MISSING_INPUT,
                Error::Numerical(_) => EXIT_NUMERICAL,
                Error::Shape(_)
                | Error::Bounds { .. }
                | Error::Config(_)
                | Error::Size { .. }
                | Error::Data(_)
                | Error::Argument(_)
                | Error::Domain(_)
                | Error::Range { .. }
                | Error::Dataset(_) => EXIT_INVALID_CONFIG,
            },
        }
    }
}
