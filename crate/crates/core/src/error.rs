use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty field: no positive value to locate")]
    EmptyField,

    #[error("map construction failed: {0}")]
    MapConstruction(String),

    #[error("positivity violated at index {0}")]
    PositivityViolated(usize),

    #[error("past blow-up: t = {t} >= T = {blowup}")]
    PastBlowup { t: f64, blowup: f64 },

    #[error("critical parameters: {0}")]
    Critical(String),

    #[error("snapshot parse error at line {line}: {msg}")]
    Snapshot { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
