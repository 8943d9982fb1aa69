use thiserror::Error;

#[derive(Debug, Error)]
pub enum LeNetError {
    #[error("shape mismatch at {layer}: expected {expected}, got {actual}")]
    Shape {
        layer: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid architecture at {layer}: {reason}")]
    Architecture { layer: &'static str, reason: String },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LeNetError>;
