//! Network description, parameter storage, and the fake-quantized forward and
//! backward passes.
//!
//! Hidden layers use ReLU; the last layer is a dense layer emitting logits.
//! Convolutions are stride 1 with valid padding. Quantization applies to
//! weights only; biases stay in full precision.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::error::{NnError, Result};
use super::quantize::quantize_layer;
use super::regularize::sinreq_period;
use super::tensor::Tensor;
use crate::cost::QuantAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
}

/// Architecture entry as written in a run config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerDef {
    Dense { units: usize },
    Conv2d { out_channels: usize, kernel: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    /// Square kernel size; 0 for dense layers.
    pub kernel: usize,
    pub n_weights: u64,
    pub n_macc: u64,
    /// Population standard deviation of the pretrained weights.
    pub weight_std: f64,
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Dense => vec![self.out_dims[0], self.in_dims.iter().product()],
            LayerKind::Conv2d => vec![self.out_dims[0], self.in_dims[0], self.kernel, self.kernel],
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_dims.iter().product()
    }

    fn fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Dense => (self.in_len(), self.out_dims[0]),
            LayerKind::Conv2d => {
                let k2 = self.kernel * self.kernel;
                (self.in_dims[0] * k2, self.out_dims[0] * k2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input_dims: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    /// Accuracy of the unquantized network; set once baseline training is done.
    pub full_precision_accuracy: Option<f64>,
}

impl NetworkSpec {
    pub fn build(name: impl Into<String>, input_dims: &[usize], defs: &[LayerDef]) -> Result<Self> {
        if defs.is_empty() {
            return Err(NnError::InvalidNetwork("network has no layers".into()));
        }
        if input_dims.is_empty() || input_dims.iter().any(|&d| d == 0) {
            return Err(NnError::InvalidNetwork(format!("bad input dims {input_dims:?}")));
        }
        let mut dims = input_dims.to_vec();
        let mut layers = Vec::with_capacity(defs.len());
        for (index, def) in defs.iter().enumerate() {
            let layer = match *def {
                LayerDef::Dense { units } => {
                    if units == 0 {
                        return Err(NnError::InvalidNetwork(format!("layer {index}: zero units")));
                    }
                    let fan_in: usize = dims.iter().product();
                    LayerSpec {
                        index,
                        kind: LayerKind::Dense,
                        in_dims: dims.clone(),
                        out_dims: vec![units],
                        kernel: 0,
                        n_weights: (units * fan_in) as u64,
                        n_macc: (units * fan_in) as u64,
                        weight_std: 0.0,
                    }
                }
                LayerDef::Conv2d { out_channels, kernel } => {
                    if dims.len() != 3 {
                        return Err(NnError::InvalidNetwork(format!(
                            "layer {index}: conv2d needs a [channels, height, width] input, got {dims:?}"
                        )));
                    }
                    let (c, h, w) = (dims[0], dims[1], dims[2]);
                    if out_channels == 0 || kernel == 0 || kernel > h || kernel > w {
                        return Err(NnError::InvalidNetwork(format!(
                            "layer {index}: kernel {kernel} with {out_channels} channels does not fit {dims:?}"
                        )));
                    }
                    let (ho, wo) = (h - kernel + 1, w - kernel + 1);
                    let nw = out_channels * c * kernel * kernel;
                    LayerSpec {
                        index,
                        kind: LayerKind::Conv2d,
                        in_dims: dims.clone(),
                        out_dims: vec![out_channels, ho, wo],
                        kernel,
                        n_weights: nw as u64,
                        n_macc: (nw * ho * wo) as u64,
                        weight_std: 0.0,
                    }
                }
            };
            dims = layer.out_dims.clone();
            layers.push(layer);
        }
        let last = layers.last().expect("nonempty");
        if last.kind != LayerKind::Dense {
            return Err(NnError::InvalidNetwork("the output layer must be dense".into()));
        }
        let num_classes = last.out_dims[0];
        if num_classes < 2 {
            return Err(NnError::InvalidNetwork("need at least two output classes".into()));
        }
        Ok(Self {
            name: name.into(),
            input_dims: input_dims.to_vec(),
            num_classes,
            layers,
            full_precision_accuracy: None,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.iter().product()
    }

    /// Records per-layer weight standard deviations from pretrained weights.
    pub fn record_weight_stats(&mut self, weights: &NetworkWeights) {
        for (l, w) in self.layers.iter_mut().zip(&weights.layers) {
            l.weight_std = w.weight.std_dev();
        }
    }

    pub fn check_weights(&self, weights: &NetworkWeights) -> Result<()> {
        if weights.layers.len() != self.layers.len() {
            return Err(NnError::Dimension(format!(
                "{} weight layers for a {}-layer network",
                weights.layers.len(),
                self.layers.len()
            )));
        }
        for (l, w) in self.layers.iter().zip(&weights.layers) {
            if w.weight.shape() != l.weight_shape().as_slice() || w.bias.shape() != [l.out_dims[0]] {
                return Err(NnError::Dimension(format!(
                    "layer {}: weight {:?} / bias {:?} do not match {:?}",
                    l.index,
                    w.weight.shape(),
                    w.bias.shape(),
                    l.weight_shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
}

impl NetworkWeights {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| LayerWeights {
                    weight: Tensor::zeros(l.weight_shape()),
                    bias: Tensor::zeros(vec![l.out_dims[0]]),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite() && l.bias.is_finite())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &NetworkWeights) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += alpha * y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += alpha * y;
            }
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> NetworkWeights {
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            let (fan_in, fan_out) = l.fans();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let shape = l.weight_shape();
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
            LayerWeights {
                weight: Tensor::new(shape, data).expect("shape matches"),
                bias: Tensor::zeros(vec![l.out_dims[0]]),
            }
        })
        .collect();
    NetworkWeights { layers }
}

/// Mean absolute distance of all weights to the nearest multiple of `2^-qbits`.
pub fn mean_distance_to_grid(weights: &NetworkWeights, qbits: u32) -> f64 {
    let delta = sinreq_period(qbits);
    let (mut total, mut count) = (0.0, 0usize);
    for l in &weights.layers {
        for &w in l.weight.data() {
            total += (w - delta * (w / delta).round()).abs();
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// Input to each layer, `batch * in_len`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer, `batch * out_len`.
    outputs: Vec<Vec<f64>>,
    /// Weights actually used in the product (quantized when an assignment is active).
    effective: Vec<Tensor>,
}

impl ForwardCache {
    pub fn logits(&self, num_classes: usize) -> Tensor {
        let data = self.outputs.last().expect("nonempty").clone();
        Tensor::new(vec![self.batch, num_classes], data).expect("logit shape")
    }
}

fn effective_weights(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    assignment: Option<&QuantAssignment>,
) -> Result<Vec<Tensor>> {
    match assignment {
        None => Ok(weights.layers.iter().map(|l| l.weight.clone()).collect()),
        Some(a) => {
            if a.len() != spec.num_layers() {
                return Err(NnError::Dimension(format!(
                    "assignment has {} entries for {} layers",
                    a.len(),
                    spec.num_layers()
                )));
            }
            weights
                .layers
                .iter()
                .zip(a.bits())
                .map(|(l, &k)| quantize_layer(&l.weight, k))
                .collect()
        }
    }
}

fn dense_forward(x: &[f64], n: usize, w: &Tensor, b: &Tensor, out: &mut [f64]) {
    let (o_len, i_len) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    for s in 0..n {
        let xs = &x[s * i_len..(s + 1) * i_len];
        let ys = &mut out[s * o_len..(s + 1) * o_len];
        for (o, y) in ys.iter_mut().enumerate() {
            let row = &wd[o * i_len..(o + 1) * i_len];
            *y = b.data()[o] + row.iter().zip(xs).map(|(a, c)| a * c).sum::<f64>();
        }
    }
}

fn conv_forward(x: &[f64], n: usize, l: &LayerSpec, w: &Tensor, b: &Tensor, out: &mut [f64]) {
    let (c_in, h, wi) = (l.in_dims[0], l.in_dims[1], l.in_dims[2]);
    let (c_out, ho, wo) = (l.out_dims[0], l.out_dims[1], l.out_dims[2]);
    let k = l.kernel;
    let wd = w.data();
    for s in 0..n {
        let xs = &x[s * c_in * h * wi..(s + 1) * c_in * h * wi];
        let ys = &mut out[s * c_out * ho * wo..(s + 1) * c_out * ho * wo];
        for o in 0..c_out {
            let plane = &mut ys[o * ho * wo..(o + 1) * ho * wo];
            plane.iter_mut().for_each(|v| *v = b.data()[o]);
            for c in 0..c_in {
                let xc = &xs[c * h * wi..(c + 1) * h * wi];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wd[((o * c_in + c) * k + ky) * k + kx];
                        for yy in 0..ho {
                            let xrow = &xc[(yy + ky) * wi + kx..(yy + ky) * wi + kx + wo];
                            let prow = &mut plane[yy * wo..(yy + 1) * wo];
                            for (p, xv) in prow.iter_mut().zip(xrow) {
                                *p += wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass keeping every intermediate needed by [`backward`].
pub fn forward_cached(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    batch: &Tensor,
    assignment: Option<&QuantAssignment>,
) -> Result<ForwardCache> {
    spec.check_weights(weights)?;
    if batch.row_len() != spec.input_len() || batch.shape().len() < 2 {
        return Err(NnError::Dimension(format!(
            "batch {:?} does not match network input {:?}",
            batch.shape(),
            spec.input_dims
        )));
    }
    let n = batch.rows();
    let effective = effective_weights(spec, weights, assignment)?;
    let mut inputs = Vec::with_capacity(spec.num_layers());
    let mut outputs = Vec::with_capacity(spec.num_layers());
    let mut x = batch.data().to_vec();
    let last = spec.num_layers() - 1;
    for (i, l) in spec.layers.iter().enumerate() {
        let mut z = vec![0.0; n * l.out_len()];
        match l.kind {
            LayerKind::Dense => dense_forward(&x, n, &effective[i], &weights.layers[i].bias, &mut z),
            LayerKind::Conv2d => conv_forward(&x, n, l, &effective[i], &weights.layers[i].bias, &mut z),
        }
        let next = if i < last { z.iter().map(|&v| v.max(0.0)).collect() } else { Vec::new() };
        inputs.push(std::mem::replace(&mut x, next));
        outputs.push(z);
    }
    Ok(ForwardCache { batch: n, inputs, outputs, effective })
}

/// Logits `N x C`, with weights fake-quantized per layer when `assignment` is given.
pub fn forward(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    batch: &Tensor,
    assignment: Option<&QuantAssignment>,
) -> Result<Tensor> {
    Ok(forward_cached(spec, weights, batch, assignment)?.logits(spec.num_classes))
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = (logits.rows(), logits.row_len());
    if labels.len() != n {
        return Err(NnError::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = vec![0.0; n * c];
    let mut loss = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(NnError::Dimension(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(s);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + z.ln();
        loss += log_z - row[y];
        let g = &mut grad[s * c..(s + 1) * c];
        for (j, gv) in g.iter_mut().enumerate() {
            *gv = ((row[j] - log_z).exp() - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, Tensor::new(vec![n, c], grad)?))
}

/// Back-propagates `d_logits` through the cached pass.
///
/// Quantized layers use the straight-through rule: the gradient with respect
/// to the master weight equals the gradient with respect to its quantized
/// value. With max-abs scaling every normalized weight lies inside the clip
/// range, so the pass-through is never masked.
pub fn backward(spec: &NetworkSpec, cache: &ForwardCache, d_logits: &Tensor) -> Result<NetworkWeights> {
    let n = cache.batch;
    if d_logits.len() != n * spec.num_classes {
        return Err(NnError::Dimension("logit gradient shape".into()));
    }
    let mut grads = NetworkWeights::zeros_like(spec);
    let mut dz = d_logits.data().to_vec();
    for i in (0..spec.num_layers()).rev() {
        let l = &spec.layers[i];
        let x = &cache.inputs[i];
        let w = cache.effective[i].data();
        let g = &mut grads.layers[i];
        let mut dx = vec![0.0; n * l.in_len()];
        match l.kind {
            LayerKind::Dense => {
                let (o_len, i_len) = (l.out_len(), l.in_len());
                let gw = g.weight.data_mut();
                for s in 0..n {
                    let xs = &x[s * i_len..(s + 1) * i_len];
                    let dxs = &mut dx[s * i_len..(s + 1) * i_len];
                    for o in 0..o_len {
                        let d = dz[s * o_len + o];
                        if d == 0.0 {
                            continue;
                        }
                        let gw_row = &mut gw[o * i_len..(o + 1) * i_len];
                        for (gv, xv) in gw_row.iter_mut().zip(xs) {
                            *gv += d * xv;
                        }
                        let w_row = &w[o * i_len..(o + 1) * i_len];
                        for (dv, wv) in dxs.iter_mut().zip(w_row) {
                            *dv += d * wv;
                        }
                    }
                }
                let gb = g.bias.data_mut();
                for s in 0..n {
                    for o in 0..o_len {
                        gb[o] += dz[s * o_len + o];
                    }
                }
            }
            LayerKind::Conv2d => {
                let (c_in, h, wi) = (l.in_dims[0], l.in_dims[1], l.in_dims[2]);
                let (c_out, ho, wo) = (l.out_dims[0], l.out_dims[1], l.out_dims[2]);
                let k = l.kernel;
                let in_len = c_in * h * wi;
                let out_len = c_out * ho * wo;
                {
                    let gw = g.weight.data_mut();
                    for s in 0..n {
                        let xs = &x[s * in_len..(s + 1) * in_len];
                        let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                        let dzs = &dz[s * out_len..(s + 1) * out_len];
                        for o in 0..c_out {
                            let plane = &dzs[o * ho * wo..(o + 1) * ho * wo];
                            for c in 0..c_in {
                                let xc = &xs[c * h * wi..(c + 1) * h * wi];
                                let dxc = &mut dxs[c * h * wi..(c + 1) * h * wi];
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let widx = ((o * c_in + c) * k + ky) * k + kx;
                                        let wv = w[widx];
                                        let mut acc = 0.0;
                                        for yy in 0..ho {
                                            let base = (yy + ky) * wi + kx;
                                            let prow = &plane[yy * wo..(yy + 1) * wo];
                                            let xrow = &xc[base..base + wo];
                                            acc += prow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                                            let dxrow = &mut dxc[base..base + wo];
                                            for (dv, pv) in dxrow.iter_mut().zip(prow) {
                                                *dv += wv * pv;
                                            }
                                        }
                                        gw[widx] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                let gb = g.bias.data_mut();
                for s in 0..n {
                    for o in 0..c_out {
                        let plane = &dz[s * out_len + o * ho * wo..s * out_len + (o + 1) * ho * wo];
                        gb[o] += plane.iter().sum::<f64>();
                    }
                }
            }
        }
        if i > 0 {
            // ReLU mask of the previous layer's output.
            let prev = &cache.outputs[i - 1];
            for (d, &z) in dx.iter_mut().zip(prev) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        dz = dx;
    }
    Ok(grads)
}
