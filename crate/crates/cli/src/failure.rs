use std::fmt;
use std::process::ExitCode;

use bragg_cascade::Error;
use serde::Serialize;

/// Anything that stops a command, grouped by exit status.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Validation(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Io(_) => 4,
        })
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation",
            Failure::Infeasible(_) => "infeasible",
            Failure::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }

    /// One-line JSON error document.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: &'a str,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Doc {
            error: Body {
                kind: self.kind(),
                message: self.message(),
            },
        })
        .expect("error document serializes")
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        match err {
            Error::InfeasibleTarget(_) | Error::CalibrationFailed(_) => Failure::Infeasible(err.to_string()),
            Error::Io(m) => Failure::Io(m),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::Io(err.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(err: csv::Error) -> Self {
        Failure::Io(err.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;
