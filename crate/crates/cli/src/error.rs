use std::fmt;

use serde::Serialize;

/// Process exit codes.
pub const USAGE: i32 = 2;
pub const DATA: i32 = 3;
pub const CONVERGENCE: i32 = 4;

#[derive(Debug, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl fmt::Display) -> Self {
        Self { code: USAGE, kind: "usage", message: m.to_string() }
    }

    pub fn data(m: impl fmt::Display) -> Self {
        Self { code: DATA, kind: "data", message: m.to_string() }
    }

    pub fn convergence(m: impl fmt::Display) -> Self {
        Self { code: CONVERGENCE, kind: "convergence", message: m.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<sdtlab::io::IoError> for CliError {
    fn from(e: sdtlab::io::IoError) -> Self {
        Self::data(e)
    }
}

impl From<sdtlab::optics::OpticsError> for CliError {
    fn from(e: sdtlab::optics::OpticsError) -> Self {
        Self::data(e)
    }
}

impl From<sdtlab::tomo::TomoError> for CliError {
    fn from(e: sdtlab::tomo::TomoError) -> Self {
        use sdtlab::tomo::TomoError::*;
        match e {
            NotConverged { .. } | TooManyFailures { .. } => Self::convergence(e),
            _ => Self::data(e),
        }
    }
}

impl From<sdtlab::sdtsim::SimError> for CliError {
    fn from(e: sdtlab::sdtsim::SimError) -> Self {
        use sdtlab::sdtsim::SimError::*;
        match e {
            InvalidConfig(_) => Self::usage(e),
            Tomo(t) => t.into(),
            State(_) => Self::data(e),
        }
    }
}

impl From<sdtlab::spacelink::SpaceError> for CliError {
    fn from(e: sdtlab::spacelink::SpaceError) -> Self {
        use sdtlab::spacelink::SpaceError::*;
        match e {
            Unstable { .. } => Self::convergence(e),
            Sim(s) => s.into(),
            _ => Self::usage(e),
        }
    }
}

impl From<sdtlab::qcore::QcoreError> for CliError {
    fn from(e: sdtlab::qcore::QcoreError) -> Self {
        Self::data(e)
    }
}
