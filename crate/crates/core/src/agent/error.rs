use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("PPO update diverged: non-finite {0}")]
    UpdateDiverged(&'static str),
    #[error("invalid PPO config: {0}")]
    InvalidConfig(String),
    #[error("empty batch: at least one trajectory with one step is required")]
    EmptyBatch,
    #[error("corrupt agent checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("agent checkpoint version mismatch: {0}")]
    Version(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
