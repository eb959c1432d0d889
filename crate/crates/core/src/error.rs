use thiserror::Error;

/// Errors raised by configuration, control and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration or scenario field violates its contract.
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tap ladder must be strictly increasing with at least two taps")]
    InvalidLadder,

    #[error("network is singular: {0}")]
    SingularNetwork(String),

    /// The integrated state became non-finite.
    #[error("simulation diverged at t = {time:.9e} s: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("signal error: {0}")]
    Signal(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical integration rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
