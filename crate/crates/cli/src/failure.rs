use std::fmt;

use translock::Error;

/// A command failure with its exit code: 2 for bad usage, configuration or
/// input data, 1 for anything that went wrong while running.
#[derive(Debug)]
pub struct Failure {
    code: i32,
    message: String,
}

pub type Outcome<T> = std::result::Result<T, Failure>;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn code(&self) -> i32 {
        self.code
    }

    pub fn context(mut self, context: impl fmt::Display) -> Self {
        self.message = format!("{}: {context}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::Configuration(_) | Error::InvalidModel(_) | Error::Geometry(_) => {
                Self::usage(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

/// Marks errors from reading user-supplied inputs as usage errors.
pub trait InputError<T> {
    fn input(self, what: impl fmt::Display) -> Outcome<T>;
}

impl<T, E: fmt::Display> InputError<T> for std::result::Result<T, E> {
    fn input(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure::usage(format!("{what}: {e}")))
    }
}
