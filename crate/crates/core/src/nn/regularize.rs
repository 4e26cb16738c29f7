//! Weight-decay and sinusoidal quantization-friendly regularizers.

use std::f64::consts::PI;

use super::tensor::Tensor;

/// `½·λ·Σ w²`.
pub fn weight_decay_loss(w: &Tensor, lambda_wd: f64) -> f64 {
    0.5 * lambda_wd * w.sum_squares()
}

pub fn weight_decay_grad(w: &Tensor, lambda_wd: f64, out: &mut [f64]) {
    for (g, &v) in out.iter_mut().zip(w.data()) {
        *g += lambda_wd * v;
    }
}

/// Period of the sinusoidal regularizer for `qbits`: `2^-qbits`.
pub fn sinreq_period(qbits: u32) -> f64 {
    (-(qbits as f64)).exp2()
}

/// `½·λq·Σ sin²(π·w / 2^-qbits)`. Zero exactly on multiples of the period.
pub fn sinreq_loss(w: &Tensor, qbits: u32, lambda_q: f64) -> f64 {
    if lambda_q == 0.0 {
        return 0.0;
    }
    let delta = sinreq_period(qbits);
    let s: f64 = w
        .data()
        .iter()
        .map(|&v| {
            let x = (PI * v / delta).sin();
            x * x
        })
        .sum();
    0.5 * lambda_q * s
}

/// Accumulates `d sinreq / dw = (λq·π / 2δ)·sin(2π·w / δ)` into `out`.
pub fn sinreq_grad(w: &Tensor, qbits: u32, lambda_q: f64, out: &mut [f64]) {
    if lambda_q == 0.0 {
        return;
    }
    let delta = sinreq_period(qbits);
    let c = lambda_q * PI / (2.0 * delta);
    for (g, &v) in out.iter_mut().zip(w.data()) {
        *g += c * (2.0 * PI * v / delta).sin();
    }
}
