use serde::{Deserialize, Serialize};

use crate::nn::LayerSpec;

pub const EMBEDDING_DIM: usize = 7;

/// Per-step observation, in order: layer index / L, normalized log10 weight
/// count, normalized log10 MAC count, weight standard deviation, current bits
/// / max bits, state of quantization, state of relative accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEmbedding(pub [f64; EMBEDDING_DIM]);

impl StateEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn log_norm(count: u64) -> f64 {
    ((count.max(1) as f64).log10() / 7.0).clamp(0.0, 1.2)
}

pub fn embed_state(
    layer: &LayerSpec,
    bits_now: u32,
    quant_state: f64,
    acc_state: f64,
    num_layers: usize,
    max_bits: u32,
) -> StateEmbedding {
    StateEmbedding([
        layer.index as f64 / num_layers as f64,
        log_norm(layer.n_weights),
        log_norm(layer.n_macc),
        layer.weight_std,
        bits_now as f64 / max_bits as f64,
        quant_state,
        acc_state,
    ])
}
