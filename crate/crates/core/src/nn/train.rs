use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Split};
use super::error::{NnError, Result};
use super::network::{backward, forward, forward_cached, softmax_cross_entropy, NetworkSpec, NetworkWeights};
use super::regularize::{sinreq_grad, sinreq_loss, weight_decay_grad, weight_decay_loss};
use super::tensor::Tensor;
use crate::cost::QuantAssignment;

/// Mini-batch SGD settings for network training and finetuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Strength of the sinusoidal quantization regularizer.
    pub lambda_q: f64,
    /// Weight-decay strength.
    pub lambda_wd: f64,
    /// Shuffle seed. Not part of the serialized form; runners derive it from
    /// their root seed.
    #[serde(skip)]
    pub seed: u64,
    /// Regularizer period exponent used when no assignment is active.
    pub sinreq_bits: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 32,
            lambda_q: 0.0,
            lambda_wd: 0.0,
            seed: 0,
            sinreq_bits: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        for (name, v) in [("lambda_q", self.lambda_q), ("lambda_wd", self.lambda_wd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(NnError::InvalidConfig(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if self.sinreq_bits == 0 {
            return Err(NnError::InvalidConfig("sinreq_bits must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    /// Mean mini-batch objective per epoch.
    pub loss_curve: Vec<f64>,
}

fn sinreq_bits_for(layer: usize, cfg: &TrainConfig, assignment: Option<&QuantAssignment>) -> u32 {
    assignment.map_or(cfg.sinreq_bits, |a| a.bits()[layer])
}

/// Full objective (cross-entropy + weight decay + sinusoidal regularizer) and
/// its gradient for one batch.
pub fn loss_and_grad(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    inputs: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
    assignment: Option<&QuantAssignment>,
) -> Result<(f64, NetworkWeights)> {
    let cache = forward_cached(spec, weights, inputs, assignment)?;
    let (mut loss, d_logits) = softmax_cross_entropy(&cache.logits(spec.num_classes), labels)?;
    let mut grads = backward(spec, &cache, &d_logits)?;
    for (i, (w, g)) in weights.layers.iter().zip(grads.layers.iter_mut()).enumerate() {
        let qbits = sinreq_bits_for(i, cfg, assignment);
        loss += weight_decay_loss(&w.weight, cfg.lambda_wd) + sinreq_loss(&w.weight, qbits, cfg.lambda_q);
        weight_decay_grad(&w.weight, cfg.lambda_wd, g.weight.data_mut());
        sinreq_grad(&w.weight, qbits, cfg.lambda_q, g.weight.data_mut());
    }
    Ok((loss, grads))
}

/// Mini-batch SGD. Deterministic for a given `cfg.seed`; with an assignment the
/// forward pass is fake-quantized and gradients pass straight through.
pub fn train(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    data: &Dataset,
    cfg: &TrainConfig,
    assignment: Option<&QuantAssignment>,
) -> Result<TrainOutcome> {
    let mut w = weights.clone();
    let loss_curve = sgd_epochs(spec, &mut w, data, cfg, assignment, &mut |_, _| Ok(()))?;
    Ok(TrainOutcome { weights: w, loss_curve })
}

fn sgd_epochs(
    spec: &NetworkSpec,
    w: &mut NetworkWeights,
    data: &Dataset,
    cfg: &TrainConfig,
    assignment: Option<&QuantAssignment>,
    after_epoch: &mut dyn FnMut(usize, &NetworkWeights) -> Result<()>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.split != Split::Train {
        return Err(NnError::InvalidConfig(format!("training needs the train split, got {:?}", data.split)));
    }
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    spec.check_weights(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = data.batch(chunk);
            let (loss, grads) = loss_and_grad(spec, w, &x, &y, cfg, assignment)?;
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            w.add_scaled(-cfg.learning_rate, &grads);
            total += loss;
            batches += 1;
        }
        if !w.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        loss_curve.push(total / batches as f64);
        after_epoch(epoch, w)?;
    }
    Ok(loss_curve)
}

#[derive(Debug, Clone)]
pub struct SelectedOutcome {
    /// Weights after the epoch with the highest validation accuracy.
    pub weights: NetworkWeights,
    /// Zero-based epoch those weights come from.
    pub epoch: usize,
    pub validation_accuracy: f64,
    pub loss_curve: Vec<f64>,
    pub validation_curve: Vec<f64>,
}

/// Like [`train`], but scores every epoch on `validation` and keeps the best
/// one (earliest on ties). Needs at least one epoch.
pub fn train_select_best(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    data: &Dataset,
    validation: &Dataset,
    cfg: &TrainConfig,
    assignment: Option<&QuantAssignment>,
) -> Result<SelectedOutcome> {
    if cfg.epochs == 0 {
        return Err(NnError::InvalidConfig("epoch selection needs epochs >= 1".into()));
    }
    let mut w = weights.clone();
    let mut best: Option<(usize, f64, NetworkWeights)> = None;
    let mut validation_curve = Vec::with_capacity(cfg.epochs);
    let loss_curve = sgd_epochs(spec, &mut w, data, cfg, assignment, &mut |epoch, cur| {
        let acc = evaluate_accuracy(spec, cur, validation, assignment)?;
        validation_curve.push(acc);
        if best.as_ref().is_none_or(|b| acc > b.1) {
            best = Some((epoch, acc, cur.clone()));
        }
        Ok(())
    })?;
    let (epoch, validation_accuracy, weights) = best.expect("at least one epoch");
    Ok(SelectedOutcome { weights, epoch, validation_accuracy, loss_curve, validation_curve })
}

/// Fraction of argmax-correct predictions; ties go to the lowest class index.
pub fn evaluate_accuracy(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    data: &Dataset,
    assignment: Option<&QuantAssignment>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(256) {
        let (x, y) = data.batch(chunk);
        let logits = forward(spec, weights, &x, assignment)?;
        for (s, &label) in y.iter().enumerate() {
            let row = logits.row(s);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            correct += usize::from(best == label);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Short quantized retrain on a private copy of `weights`, then validation
/// accuracy under the same assignment. `short_epochs == 0` only evaluates.
pub fn finetune_and_estimate(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    assignment: &QuantAssignment,
    train_data: &Dataset,
    validation: &Dataset,
    short_epochs: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    if short_epochs == 0 {
        return evaluate_accuracy(spec, weights, validation, Some(assignment));
    }
    let cfg = TrainConfig { epochs: short_epochs, ..cfg.clone() };
    let tuned = train(spec, weights, train_data, &cfg, Some(assignment))?;
    evaluate_accuracy(spec, &tuned.weights, validation, Some(assignment))
}
