//! Scale-clip-round weight quantizer with a mid-tread grid.
//!
//! A `k`-bit weight keeps one sign bit and `k - 1` magnitude bits, so the
//! normalized levels are `i / (2^(k-1) - 1)` for `|i| <= 2^(k-1) - 1`. Zero is
//! always a level. Rounding is half-away-from-zero, which keeps the quantizer
//! odd-symmetric.

use super::error::{NnError, Result};
use super::tensor::Tensor;

fn levels(k: u32) -> Result<f64> {
    if !(2..=31).contains(&k) {
        return Err(NnError::InvalidBitwidth(k));
    }
    Ok(((1_u64 << (k - 1)) - 1) as f64)
}

/// `round(m * x)` with ties away from zero, decided on the exact product.
/// Rounding `m * x` first can turn a value just below a half into an exact
/// half; the fused residual keeps the sign of the true difference.
fn round_level(m: f64, x: f64) -> f64 {
    let a = x.abs();
    let base = (m * a).floor();
    let above_half = m.mul_add(a, -(base + 0.5)) >= 0.0;
    (base + if above_half { 1.0 } else { 0.0 }).copysign(x)
}

/// Quantizes a weight already clipped to `[-1, 1]` onto the `k`-bit grid.
pub fn quantize_weight(w: f64, k: u32) -> Result<f64> {
    let m = levels(k)?;
    Ok(round_level(m, w.clamp(-1.0, 1.0)) / m)
}

/// Per-layer scale factor: the max-abs of the weights, or 1 for an all-zero tensor.
pub fn layer_scale(weights: &Tensor) -> f64 {
    let s = weights.max_abs();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Scales by the layer max-abs, clips to `[-1, 1]`, quantizes and scales back.
pub fn quantize_layer(weights: &Tensor, k: u32) -> Result<Tensor> {
    quantize_layer_with_scale(weights, k, layer_scale(weights))
}

pub fn quantize_layer_with_scale(weights: &Tensor, k: u32, scale: f64) -> Result<Tensor> {
    let m = levels(k)?;
    let data = weights
        .data()
        .iter()
        .map(|&w| scale * (round_level(m, (w / scale).clamp(-1.0, 1.0)) / m))
        .collect();
    Tensor::new(weights.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frozen_examples() {
        assert_eq!(quantize_weight(0.0, 5).unwrap(), 0.0);
        assert_eq!(quantize_weight(0.7, 2).unwrap(), 1.0);
        assert!((quantize_weight(0.5, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn near_tie_uses_the_exact_product() {
        // The double nearest 0.7 lies below 0.7, so 15 * w is just under 10.5
        // even though the rounded product is exactly 10.5.
        assert_eq!(15.0 * 0.7, 10.5);
        assert_eq!(quantize_weight(0.7, 5).unwrap(), 10.0 / 15.0);
        assert_eq!(quantize_weight(-0.7, 5).unwrap(), -10.0 / 15.0);
        // Exact halves still go away from zero.
        assert_eq!(quantize_weight(0.5, 2).unwrap(), 1.0);
        assert_eq!(quantize_weight(-0.5, 2).unwrap(), -1.0);
    }

    #[test]
    fn one_bit_is_rejected() {
        assert!(matches!(quantize_weight(0.3, 1), Err(NnError::InvalidBitwidth(1))));
        assert!(matches!(quantize_weight(0.3, 0), Err(NnError::InvalidBitwidth(0))));
    }

    #[test]
    fn zero_layer_stays_zero() {
        let t = Tensor::from_vec(vec![0.0; 3]);
        assert_eq!(quantize_layer(&t, 4).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        let t = Tensor::from_vec(vec![0.5, -1.0]);
        assert_eq!(quantize_layer(&t, 2).unwrap().data(), &[1.0, -1.0]);
    }

    #[test]
    fn grid_size_per_bitwidth() {
        for k in 2..=8u32 {
            let mut seen: Vec<f64> = (0..=20_000)
                .map(|i| quantize_weight(-1.0 + i as f64 / 10_000.0, k).unwrap())
                .collect();
            seen.sort_by(f64::total_cmp);
            seen.dedup();
            assert_eq!(seen.len() as u64, 2 * ((1u64 << (k - 1)) - 1) + 1, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn error_bounded_by_half_step(w in -1.0f64..=1.0, k in 2u32..=8) {
            let m = ((1u64 << (k - 1)) - 1) as f64;
            let q = quantize_weight(w, k).unwrap();
            prop_assert!((q - w).abs() <= 0.5 / m + 1e-15);
        }

        #[test]
        fn idempotent_monotone_odd(a in -1.0f64..=1.0, b in -1.0f64..=1.0, k in 2u32..=8) {
            let qa = quantize_weight(a, k).unwrap();
            prop_assert_eq!(quantize_weight(qa, k).unwrap(), qa);
            prop_assert_eq!(quantize_weight(-a, k).unwrap(), -qa);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_weight(lo, k).unwrap() <= quantize_weight(hi, k).unwrap());
        }

        #[test]
        fn layer_quantization_is_idempotent(
            data in proptest::collection::vec(-3.0f64..3.0, 1..40),
            k in 2u32..=8,
        ) {
            let t = Tensor::from_vec(data);
            let q1 = quantize_layer(&t, k).unwrap();
            let q2 = quantize_layer(&q1, k).unwrap();
            prop_assert_eq!(q1, q2);
        }
    }
}
