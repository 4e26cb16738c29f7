//! Per-layer mixed-precision weight quantization driven by a recurrent PPO agent.
//!
//! The crate is split along the stages of a search run:
//!
//! - [`nn`]: a small dense/conv training core with fake-quantized weights,
//!   sinusoidal and weight-decay regularizers, dataset ingestion and evaluation.
//! - [`cost`]: the analytical cost model (state of quantization, bit-serial
//!   speedup and energy ratios).
//! - [`agent`]: LSTM-first policy and value networks trained with clipped PPO.
//! - [`env`]: the layer-by-layer search environment, reward shaping and the
//!   episode loop.
//! - [`pareto`]: exhaustive enumeration, frontier extraction and solution
//!   validation.

pub mod agent;
pub mod cost;
pub mod env;
pub mod nn;
pub mod pareto;
pub mod seed;

pub use cost::{CostParams, QuantAssignment};
pub use nn::{Dataset, LayerSpec, NetworkSpec, NetworkWeights, Tensor, TrainConfig};
