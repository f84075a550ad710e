use simlearn::fenchel::FenchelError;
use simlearn::learners::LearnerError;
use simlearn::synth::DatasetError;
use thiserror::Error;

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code when a check, suite or verification fails.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for configuration, input and I/O errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numeric failures such as training divergence.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<FenchelError> for CliError {
    fn from(e: FenchelError) -> Self {
        match e {
            FenchelError::NoConvergence { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::Divergence { .. } => CliError::Numeric(e.to_string()),
            LearnerError::Fenchel(f) => f.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}
