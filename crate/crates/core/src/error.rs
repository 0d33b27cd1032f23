use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("action {action} is not supported by a {kind} profile")]
    UnsupportedAction { action: String, kind: String },
    #[error("invalid attack script: {0}")]
    InvalidScript(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: need at least {needed} entries, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("checkpoint push rejected: {0}")]
    CheckpointRejected(String),
    #[error("reconstruction expired after {steps} steps (limit {limit})")]
    ReconstructionExpired { steps: usize, limit: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("suite validation failed: {0}")]
    SuiteValidation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Serde(err.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(err: toml::de::Error) -> Self {
        Error::Config(err.to_string())
    }
}
