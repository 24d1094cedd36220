use std::fmt;

use crate::model::{JobId, ValidationReport};

/// Errors surfaced by the scheduler core, the simulator and the I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    Validation(ValidationReport),

    #[error("percent {0} outside [0, 100]")]
    PercentOutOfRange(u32),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0}")]
    Parse(ParseError),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid generator parameters: {0}")]
    Generator(String),

    #[error("trace corruption: unknown job {0}")]
    UnknownJob(JobId),

    #[error("scheduler did not settle after {0} passes at one instant")]
    Livelock(usize),

    #[error("workload hash mismatch: {0} vs {1}")]
    WorkloadMismatch(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a defect.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::PercentOutOfRange(_)
                | Error::UnknownUser(_)
                | Error::Parse(_)
                | Error::Config(_)
                | Error::Generator(_)
                | Error::WorkloadMismatch(..)
        )
    }
}

/// A parse failure pinned to a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Parse(e)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
