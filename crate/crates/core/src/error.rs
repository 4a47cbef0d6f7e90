use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("singular state: {0}")]
    SingularState(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },

    #[error("trajectory too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("identified model is missing term `{term}` in the `{state}` equation")]
    MissingTerm { state: String, term: String },

    #[error("missing controller gain: {0}")]
    MissingGain(String),

    #[error("missing signal `{0}` in reference schedule")]
    MissingSignal(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("every candidate model diverged during replay")]
    AllDiverged,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("at t = {time}: {source}")]
    AtTime { time: f64, source: Box<Error> },
}

impl Error {
    pub(crate) fn at(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e @ Error::NonFinite { .. } => e,
            e => Error::AtTime {
                time,
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any time annotation stripped.
    pub fn innermost(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.innermost(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
