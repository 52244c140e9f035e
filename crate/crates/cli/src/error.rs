//! CLI error type carrying the process exit code.
//!
//! Exit codes: 0 success, 2 usage, 3 data/parse/IO, 4 numeric/degenerate,
//! 5 component collapse. Usage errors raised by argument parsing itself
//! also exit 2 (the parser's own convention).

use std::fmt;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 4,
            message: message.into(),
        }
    }

    pub fn collapse(message: impl Into<String>) -> Self {
        CliError {
            code: 5,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("json error: {e}"))
    }
}

/// A library error encountered while validating loaded inputs: the data is
/// at fault, not the computation.
pub fn load_error(e: ellmix::Error) -> CliError {
    CliError::data(e.to_string())
}

/// A library error from the numerics themselves.
pub fn compute_error(e: ellmix::Error) -> CliError {
    CliError::numeric(e.to_string())
}
