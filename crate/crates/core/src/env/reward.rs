use serde::{Deserialize, Serialize};

use super::error::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFormulation {
    #[default]
    Shaped,
    Ratio,
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    /// Exponent on the quantization state.
    pub a: f64,
    /// Accuracy discount exponent numerator.
    pub b: f64,
    /// Relative-accuracy floor below which the reward is -1.
    pub th: f64,
    pub formulation: RewardFormulation,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { a: 0.2, b: 0.4, th: 0.4, formulation: RewardFormulation::Shaped }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.th > 0.0 && self.th < 1.0) {
            return Err(EnvError::InvalidConfig(format!("reward th must lie in (0, 1), got {}", self.th)));
        }
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(EnvError::InvalidConfig(format!("reward a and b must be > 0, got {} and {}", self.a, self.b)));
        }
        Ok(())
    }
}

/// Reward for a (state of quantization, state of relative accuracy) pair.
///
/// Shaped: -1 below `th`, otherwise `(1 - quant^a) * m^(b/m)` with
/// `m = max(acc, th)`.
pub fn compute_reward(quant: f64, acc: f64, p: &RewardParams) -> f64 {
    match p.formulation {
        RewardFormulation::Shaped => {
            if acc < p.th {
                return -1.0;
            }
            let m = acc.max(p.th);
            (1.0 - quant.powf(p.a)) * m.powf(p.b / m)
        }
        RewardFormulation::Ratio => acc / quant,
        RewardFormulation::Difference => acc - quant,
    }
}
