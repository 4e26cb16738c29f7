//! Minimal training core: tensors, fake-quantized dense/conv networks,
//! regularizers, datasets and accuracy evaluation.

mod checkpoint;
mod data;
mod error;
mod idx;
mod network;
mod quantize;
mod regularize;
mod tensor;
mod train;

pub use checkpoint::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use data::{synth_dataset, Dataset, Split, SynthKind};
pub use error::NnError;
pub use idx::{load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels};
pub use network::{
    backward, forward, forward_cached, init_weights, mean_distance_to_grid, softmax_cross_entropy, ForwardCache,
    LayerDef, LayerKind, LayerSpec, LayerWeights, NetworkSpec, NetworkWeights,
};
pub use quantize::{quantize_layer, quantize_layer_with_scale, quantize_weight, layer_scale};
pub use regularize::{sinreq_grad, sinreq_loss, sinreq_period, weight_decay_grad, weight_decay_loss};
pub use tensor::Tensor;
pub use train::{
    evaluate_accuracy, finetune_and_estimate, loss_and_grad, train, train_select_best, SelectedOutcome, TrainConfig, TrainOutcome,
};
