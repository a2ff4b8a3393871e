use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("loss gradient kind {got:?} is not accepted here (expected {expected:?})")]
    LossKind {
        got: crate::train::LossGradKind,
        expected: crate::train::LossGradKind,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("dense oracle size {size} exceeds the cap of {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
