use std::fmt;
use std::process::ExitCode;

/// Process exit codes. Stable across versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    InputError = 2,
    NumericalFailure = 3,
    Partial = 4,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

/// Summarizes per-item outcomes: all ok, none ok, or some ok.
pub fn combine(ok: usize, input_failures: usize, numerical_failures: usize) -> Status {
    match (ok, input_failures + numerical_failures) {
        (_, 0) => Status::Success,
        (0, _) if numerical_failures == 0 => Status::InputError,
        (0, _) => Status::NumericalFailure,
        _ => Status::Partial,
    }
}

/// A command failure that aborts before any output is produced.
#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            status: Status::InputError,
            message: message.into(),
        }
    }
}

impl From<hcbm_core::Error> for CliError {
    fn from(e: hcbm_core::Error) -> Self {
        CliError {
            status: if e.is_input_error() {
                Status::InputError
            } else {
                Status::NumericalFailure
            },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
