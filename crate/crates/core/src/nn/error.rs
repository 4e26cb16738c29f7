use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid bitwidth {0}: the mid-tread quantizer needs at least 2 bits")]
    InvalidBitwidth(u32),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("bad weight checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
