use rand::Rng;
use serde::{Deserialize, Serialize};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_masked(logits, &vec![true; logits.len()])
}

/// Softmax over the entries where `mask` is true; the rest get probability 0.
pub fn softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(mask)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&v, &k)| if k { (v - m).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// Log-probabilities under [`softmax_masked`]; masked entries are `-inf`.
pub fn log_softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(mask)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().zip(mask).filter(|(_, &k)| k).map(|(&v, _)| (v - m).exp()).sum();
    let lz = m + z.ln();
    logits
        .iter()
        .zip(mask)
        .map(|(&v, &k)| if k { v - lz } else { f64::NEG_INFINITY })
        .collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Inverse-CDF draw from `dist`.
pub fn sample_action<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Any bitwidth in the set may follow any other.
    #[default]
    Flexible,
    /// Only the current bitwidth or its neighbours in the sorted set.
    Restricted,
}

/// Allowed actions over `bitwidths` (sorted ascending) given the layer's
/// current bitwidth.
pub fn action_mask(bitwidths: &[u32], current_bits: u32, mode: ActionMode) -> Vec<bool> {
    match mode {
        ActionMode::Flexible => vec![true; bitwidths.len()],
        ActionMode::Restricted => {
            let pos = bitwidths
                .iter()
                .enumerate()
                .min_by_key(|(_, &b)| b.abs_diff(current_bits))
                .map_or(0, |(i, _)| i);
            (0..bitwidths.len()).map(|i| i.abs_diff(pos) <= 1).collect()
        }
    }
}

/// Flexible mode returns `dist` unchanged; restricted mode keeps only the
/// ±1 neighbourhood of `current_bits` and renormalizes.
pub fn restrict_actions(dist: &[f64], bitwidths: &[u32], current_bits: u32, mode: ActionMode) -> Vec<f64> {
    if mode == ActionMode::Flexible {
        return dist.to_vec();
    }
    let mask = action_mask(bitwidths, current_bits, mode);
    let mass: f64 = dist.iter().zip(&mask).filter(|(_, &k)| k).map(|(p, _)| p).sum();
    let allowed = mask.iter().filter(|&&k| k).count() as f64;
    dist.iter()
        .zip(&mask)
        .map(|(&p, &k)| match (k, mass > 0.0) {
            (false, _) => 0.0,
            (true, true) => p / mass,
            (true, false) => 1.0 / allowed,
        })
        .collect()
}
