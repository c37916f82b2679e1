use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative-utility: {0}")]
    NegativeUtility(f64),
    #[error("need at least {required} agents, got {got}")]
    TooFewAgents { required: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("nonfinite-loss")]
    NonFiniteLoss,
    #[error("off-boundary-selection: clock is {clock}")]
    OffBoundarySelection { clock: usize },
    #[error("unknown agent tag `{0}`")]
    UnknownTag(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable kebab-case code for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeUtility(_) => "negative-utility",
            Error::TooFewAgents { .. } => "too-few-agents",
            Error::Empty(_) => "empty",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NonFiniteLoss => "nonfinite-loss",
            Error::OffBoundarySelection { .. } => "off-boundary-selection",
            Error::UnknownTag(_) => "unknown-tag",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Checkpoint(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
