//! Analytical quantization-benefit model.
//!
//! A layer's cost is its memory traffic (weight count scaled by the memory to
//! MAC energy ratio) plus its MAC count, and both scale linearly with the
//! layer bitwidth. Speedup and energy figures are ratios against a uniform
//! baseline bitwidth on a bit-serial device whose latency is linear in the
//! weight bitwidth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{LayerSpec, NetworkSpec};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("assignment has {got} bitwidths for a {expected}-layer network")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("cannot parse assignment {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Memory-access energy over MAC energy.
    pub energy_ratio: f64,
    /// Largest bitwidth in the action set.
    pub max_bits: u32,
    /// Bitwidth of the reference deployment for speedup/energy ratios.
    pub baseline_bits: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { energy_ratio: 120.0, max_bits: 8, baseline_bits: 8 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.energy_ratio > 0.0 && self.energy_ratio.is_finite()) {
            return Err(CostError::InvalidParams(format!("energy_ratio must be > 0, got {}", self.energy_ratio)));
        }
        if self.max_bits == 0 || self.baseline_bits == 0 {
            return Err(CostError::InvalidParams("max_bits and baseline_bits must be positive".into()));
        }
        Ok(())
    }
}

/// One bitwidth per layer, in layer order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantAssignment(Vec<u32>);

impl QuantAssignment {
    pub fn new(bits: Vec<u32>) -> Self {
        Self(bits)
    }

    pub fn uniform(layers: usize, bits: u32) -> Self {
        Self(vec![bits; layers])
    }

    pub fn bits(&self) -> &[u32] {
        &self.0
    }

    pub fn set(&mut self, layer: usize, bits: u32) {
        self.0[layer] = bits;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn average_bits(&self) -> f64 {
        self.0.iter().map(|&b| b as f64).sum::<f64>() / self.0.len().max(1) as f64
    }
}

/// Dash-joined bits, e.g. `2-2-3-2`.
impl fmt::Display for QuantAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for QuantAssignment {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .trim()
            .split('-')
            .map(|p| p.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CostError::Parse(s.to_string()))?;
        if bits.is_empty() {
            return Err(CostError::Parse(s.to_string()));
        }
        Ok(Self(bits))
    }
}

/// `n_weights * energy_ratio + n_macc`.
pub fn layer_cost(layer: &LayerSpec, p: &CostParams) -> f64 {
    layer.n_weights as f64 * p.energy_ratio + layer.n_macc as f64
}

fn check_len(spec: &NetworkSpec, a: &QuantAssignment) -> Result<(), CostError> {
    if a.len() != spec.num_layers() {
        return Err(CostError::LengthMismatch { expected: spec.num_layers(), got: a.len() });
    }
    Ok(())
}

/// Cost-weighted bitwidth over `max_bits`, from raw per-layer costs.
pub fn state_of_quantization_from_costs(costs: &[f64], bits: &[u32], max_bits: u32) -> f64 {
    let num: f64 = costs.iter().zip(bits).map(|(c, &b)| c * b as f64).sum();
    let den: f64 = costs.iter().sum::<f64>() * max_bits as f64;
    num / den
}

/// Cost-weighted average bitwidth normalized by `max_bits`; 1.0 when every
/// layer sits at `max_bits`.
pub fn state_of_quantization(spec: &NetworkSpec, a: &QuantAssignment, p: &CostParams) -> Result<f64, CostError> {
    check_len(spec, a)?;
    let costs: Vec<f64> = spec.layers.iter().map(|l| layer_cost(l, p)).collect();
    Ok(state_of_quantization_from_costs(&costs, a.bits(), p.max_bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedupMode {
    /// Weighted by MAC counts only.
    ComputeOnly,
    /// Weighted by the full memory + compute layer cost.
    FullCost,
}

fn weighted_bit_ratio(weights: impl Iterator<Item = f64> + Clone, bits: &[u32], baseline: u32) -> f64 {
    let base: f64 = weights.clone().map(|w| w * baseline as f64).sum();
    let ours: f64 = weights.zip(bits).map(|(w, &b)| w * b as f64).sum();
    base / ours
}

/// Bit-serial latency ratio of the baseline deployment over this assignment.
pub fn speedup_estimate(
    spec: &NetworkSpec,
    a: &QuantAssignment,
    p: &CostParams,
    mode: SpeedupMode,
) -> Result<f64, CostError> {
    check_len(spec, a)?;
    Ok(match mode {
        SpeedupMode::ComputeOnly => {
            weighted_bit_ratio(spec.layers.iter().map(|l| l.n_macc as f64), a.bits(), p.baseline_bits)
        }
        SpeedupMode::FullCost => {
            weighted_bit_ratio(spec.layers.iter().map(|l| layer_cost(l, p)), a.bits(), p.baseline_bits)
        }
    })
}

/// Energy ratio of the baseline deployment over this assignment.
pub fn energy_estimate(spec: &NetworkSpec, a: &QuantAssignment, p: &CostParams) -> Result<f64, CostError> {
    speedup_estimate(spec, a, p, SpeedupMode::FullCost)
}
