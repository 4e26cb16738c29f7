//! PPO actor-critic with LSTM-first policy and value networks.
//!
//! Both networks read one state embedding per layer step and carry their LSTM
//! state across the steps of an episode; the state is zeroed at episode start.
//! The policy head is two 128-unit tanh layers feeding a softmax over the
//! bitwidth set; the value head is 128 then 64 tanh units feeding a scalar.

mod adam;
mod checkpoint;
mod embedding;
mod error;
mod gae;
mod net;
mod policy;
mod ppo;

pub use adam::Adam;
pub use checkpoint::{load_agent, read_agent, save_agent, write_agent, AGENT_MAGIC, AGENT_VERSION};
pub use embedding::{embed_state, StateEmbedding, EMBEDDING_DIM};
pub use error::AgentError;
pub use gae::gae_advantages;
pub use net::{HiddenState, NetShape, RecurrentNet, SequenceCache};
pub use policy::{
    action_mask, entropy, log_softmax_masked, restrict_actions, sample_action, softmax, softmax_masked, ActionMode,
};
pub use ppo::{
    clipped_surrogate, normalize_advantages, ppo_loss_and_grad, Agent, AgentParams, Decision, PpoBatch, PpoConfig,
    PpoLoss, RolloutState, SequenceSamples, Step, Trajectory, UpdateStats,
};
