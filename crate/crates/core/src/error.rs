use thiserror::Error;

/// Errors raised across the simulator, sharing pipeline and wire formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid action by agent {agent}: {reason}")]
    InvalidAction { agent: u32, reason: String },

    #[error("incompatible experience: expected {expected} neighbors, got {found}")]
    IncompatibleExperience { expected: usize, found: usize },

    #[error("malformed window: {0}")]
    MalformedWindow(String),

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("corrupt series: {0}")]
    CorruptSeries(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
