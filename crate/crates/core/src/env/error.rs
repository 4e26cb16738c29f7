use thiserror::Error;

use crate::agent::AgentError;
use crate::cost::CostError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("network has no recorded full-precision accuracy; train a baseline first")]
    MissingBaseline,
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("action {action} is not allowed in the current state")]
    IllegalAction { action: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}
