use std::fmt;
use std::process::ExitCode;

use dualpath_core::Error as CoreError;

/// Failure class; each maps to its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Training,
    Service,
}

impl ErrorClass {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Training => 4,
            ErrorClass::Service => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        CliError {
            class,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Data, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.class.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Default class of a library error.
pub fn classify(e: &CoreError) -> ErrorClass {
    match e {
        CoreError::Contract(_) => ErrorClass::Usage,
        CoreError::Training(_) | CoreError::ColdStart { .. } | CoreError::Calibration(_) | CoreError::Shape { .. } => {
            ErrorClass::Training
        }
        CoreError::Backpressure(_) | CoreError::Conflict(_) | CoreError::CycleAborted { .. } | CoreError::Cost(_) => {
            ErrorClass::Service
        }
        CoreError::Encoding { .. }
        | CoreError::Checkpoint(_)
        | CoreError::Scenario(_)
        | CoreError::Evaluation(_)
        | CoreError::NotFound(_)
        | CoreError::Io(_)
        | CoreError::Json(_) => ErrorClass::Data,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::new(classify(&e), e.to_string())
    }
}

/// Attaches context and, optionally, a class to library results.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
    fn class(self, class: ErrorClass, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| {
            let e = e.into();
            CliError::new(e.class, format!("{what}: {}", e.message))
        })
    }

    fn class(self, class: ErrorClass, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::new(class, format!("{what}: {}", e.into().message)))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(e.to_string())
    }
}
