//! Search environment: one episode walks the layers in order, the agent picks
//! a bitwidth per layer, and the reward combines the cost-model state with a
//! finetuned accuracy estimate.

mod accuracy;
mod environment;
mod error;
mod reward;
mod search;

pub use accuracy::{AccuracyModel, FinetuneEstimator, MemoAccuracy, OracleAccuracy};
pub use environment::{EnvConfig, EnvState, QuantEnv, RewardMode, StepOutcome};
pub use error::EnvError;
pub use reward::{compute_reward, RewardFormulation, RewardParams};
pub use search::{greedy_assignment, run_episode, run_search, BestSolution, EpisodeLog, SearchResult};
