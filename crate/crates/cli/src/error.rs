use std::fmt;

use lpq_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config = 2,
    Numerical = 3,
    Io = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: Kind::Config, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: Kind::Io, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let kind = match &err {
            Error::DimensionMismatch { .. }
            | Error::InvalidPartition(_)
            | Error::InvalidRegularizer(_)
            | Error::InvalidConfig(_)
            | Error::Precondition(_) => Kind::Config,
            Error::NonFinite { .. }
            | Error::NotConverged { .. }
            | Error::RankDeficient { .. }
            | Error::DependentRows { .. }
            | Error::Numerical(_) => Kind::Numerical,
            // Parse errors only come from input files.
            Error::Parse(_) | Error::Io(_) => Kind::Io,
        };
        Self { kind, message: err.to_string() }
    }
}

/// Attaches the offending path to file errors.
pub trait WithPath<T> {
    fn with_path(self, path: &str) -> CliResult<T>;
}

impl<T> WithPath<T> for lpq_core::Result<T> {
    fn with_path(self, path: &str) -> CliResult<T> {
        self.map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{path}: {}", err.message);
            err
        })
    }
}
