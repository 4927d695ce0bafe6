use std::fmt;
use std::process::ExitCode;

use racedriver_core::Error;

/// Error class of a failed command; each maps to its own exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Runtime(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Schema { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::InvalidTrack(_)
            | Error::InsufficientDemos(_)
            | Error::EmptyLibrary
            | Error::EmptyInput(_)
            | Error::DegenerateLine
            | Error::OutOfBand { .. }
            | Error::AmbiguousProjection { .. }
            | Error::DimensionMismatch(_) => Failure::Data(msg),
            Error::InvalidBasis(_) | Error::InvalidEnvelope(_) | Error::InvalidTimeStep(_) => Failure::Usage(msg),
            _ => Failure::Runtime(msg),
        }
    }
}
