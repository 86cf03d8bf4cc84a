use std::fmt;

use gridimage::parse::annotate;
use gridimage::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_OUT_OF_SCOPE: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_PARSE, message)
    }

    /// Wraps a library error raised while reading `input` (from `source`).
    pub fn input(source: &str, input: &str, error: Error) -> Self {
        let code = exit_code(&error);
        CliError::new(code, format!("{source}: {}", annotate(input, &error)))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        CliError::new(exit_code(&error), error.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(error: std::io::Error) -> Self {
        CliError::new(EXIT_FAILED, error.to_string())
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Parse { .. }
        | Error::NotPrime(_)
        | Error::ModulusTooLarge { .. }
        | Error::ModulusMismatch(..)
        | Error::ResidueOutOfRange { .. }
        | Error::ZeroScalar(_)
        | Error::SizeOutOfRange { .. }
        | Error::EmptySet(_)
        | Error::ArityMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::SameIndex(_)
        | Error::MalformedMatrix(_)
        | Error::NonUniformCover(_)
        | Error::InvalidConfig(_) => EXIT_PARSE,
        Error::Singular
        | Error::RankDeficient { .. }
        | Error::NotCorank1 { .. }
        | Error::EmptySupport
        | Error::OutsideWindow { .. }
        | Error::PreconditionFailed(_) => EXIT_OUT_OF_SCOPE,
        Error::CellCapExceeded { .. } | Error::FamilyCapExceeded { .. } => EXIT_RESOURCE,
        Error::Overflow(_) | Error::SoundnessViolation { .. } | Error::Checkpoint(_) => EXIT_FAILED,
    }
}
