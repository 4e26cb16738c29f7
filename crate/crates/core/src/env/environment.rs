use rand::Rng;
use serde::{Deserialize, Serialize};

use super::accuracy::AccuracyModel;
use super::error::EnvError;
use super::reward::{compute_reward, RewardParams};
use crate::agent::{action_mask, embed_state, ActionMode, Agent, RolloutState, StateEmbedding, Step};
use crate::cost::{layer_cost, state_of_quantization_from_costs, CostParams, QuantAssignment};
use crate::nn::{NetworkSpec, NnError};

/// When the accuracy estimate (and thus a nonzero reward) is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Short finetune after every layer decision.
    PerStep,
    /// Zero reward until the last layer, then one finetune.
    Deferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub bitwidths: Vec<u32>,
    pub cost: CostParams,
    pub reward: RewardParams,
    pub action_mode: ActionMode,
    /// Fixed reward mode; when unset, networks with at most
    /// `per_step_max_layers` layers use per-step rewards, deeper ones deferred.
    pub reward_mode: Option<RewardMode>,
    pub per_step_max_layers: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            bitwidths: (2..=8).collect(),
            cost: CostParams::default(),
            reward: RewardParams::default(),
            action_mode: ActionMode::Flexible,
            reward_mode: None,
            per_step_max_layers: 6,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.cost.validate()?;
        self.reward.validate()?;
        if self.bitwidths.is_empty() {
            return Err(EnvError::InvalidConfig("bitwidth set is empty".into()));
        }
        if let Some(&b) = self.bitwidths.iter().find(|&&b| b < 2 || b > self.cost.max_bits) {
            return Err(EnvError::InvalidConfig(format!(
                "bitwidth {b} outside [2, max_bits = {}]",
                self.cost.max_bits
            )));
        }
        if !self.bitwidths.contains(&self.cost.max_bits) {
            return Err(EnvError::InvalidConfig(format!(
                "bitwidth set must contain max_bits = {} (episodes start there)",
                self.cost.max_bits
            )));
        }
        Ok(())
    }

    pub fn reward_mode_for(&self, num_layers: usize) -> RewardMode {
        self.reward_mode.unwrap_or(if num_layers <= self.per_step_max_layers {
            RewardMode::PerStep
        } else {
            RewardMode::Deferred
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Next layer to decide.
    pub cursor: usize,
    pub assignment: QuantAssignment,
    pub quant: f64,
    /// State of relative accuracy.
    pub acc: f64,
    /// Set when a finetune diverged; the episode is over.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub layer: usize,
    pub bits: u32,
    pub reward: f64,
    pub quant: f64,
    pub acc: f64,
    pub done: bool,
    pub diverged: bool,
    /// Masked policy distribution the action was drawn from, if an agent acted.
    pub probs: Vec<f64>,
}

pub struct QuantEnv<'a, M: AccuracyModel + ?Sized> {
    spec: &'a NetworkSpec,
    model: &'a M,
    cfg: EnvConfig,
    costs: Vec<f64>,
    mode: RewardMode,
    state: EnvState,
}

impl<'a, M: AccuracyModel + ?Sized> QuantEnv<'a, M> {
    /// Builds the environment in its reset state. The bitwidth set is sorted
    /// and deduplicated; action `i` selects the `i`-th smallest width.
    pub fn new(spec: &'a NetworkSpec, model: &'a M, mut cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        cfg.bitwidths.sort_unstable();
        cfg.bitwidths.dedup();
        if !(model.full_precision_accuracy() > 0.0) {
            return Err(EnvError::MissingBaseline);
        }
        if spec.num_layers() == 0 {
            return Err(EnvError::InvalidConfig("network has no layers".into()));
        }
        let costs = spec.layers.iter().map(|l| layer_cost(l, &cfg.cost)).collect();
        let mode = cfg.reward_mode_for(spec.num_layers());
        let state = EnvState {
            cursor: 0,
            assignment: QuantAssignment::uniform(spec.num_layers(), cfg.cost.max_bits),
            quant: 1.0,
            acc: 1.0,
            aborted: false,
        };
        let mut env = Self { spec, model, cfg, costs, mode, state };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn bitwidths(&self) -> &[u32] {
        &self.cfg.bitwidths
    }

    pub fn reward_mode(&self) -> RewardMode {
        self.mode
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn num_layers(&self) -> usize {
        self.spec.num_layers()
    }

    pub fn is_done(&self) -> bool {
        self.state.aborted || self.state.cursor == self.num_layers()
    }

    fn quant_of(&self, a: &QuantAssignment) -> f64 {
        state_of_quantization_from_costs(&self.costs, a.bits(), self.cfg.cost.max_bits)
    }

    /// All layers at max bits; the accuracy state is taken as 1.
    pub fn reset(&mut self) -> &EnvState {
        let assignment = QuantAssignment::uniform(self.num_layers(), self.cfg.cost.max_bits);
        self.state = EnvState { cursor: 0, quant: self.quant_of(&assignment), assignment, acc: 1.0, aborted: false };
        &self.state
    }

    /// Starts an episode from an existing assignment, with its estimated
    /// accuracy as the accuracy state.
    pub fn reset_to(&mut self, assignment: QuantAssignment) -> Result<&EnvState, EnvError> {
        if assignment.len() != self.num_layers() {
            return Err(EnvError::InvalidConfig(format!(
                "start assignment has {} layers, network has {}",
                assignment.len(),
                self.num_layers()
            )));
        }
        if let Some(b) = assignment.bits().iter().find(|b| !self.cfg.bitwidths.contains(b)) {
            return Err(EnvError::InvalidConfig(format!("start assignment uses {b} bits, not in the set")));
        }
        let acc = match self.model.relative_accuracy(&assignment) {
            Ok(v) => v,
            Err(EnvError::Nn(NnError::Diverged { .. })) => 0.0,
            Err(e) => return Err(e),
        };
        self.state = EnvState { cursor: 0, quant: self.quant_of(&assignment), assignment, acc, aborted: false };
        Ok(&self.state)
    }

    /// Embedding of the current state and the legal-action mask.
    pub fn observe(&self) -> Result<(StateEmbedding, Vec<bool>), EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeFinished);
        }
        let l = self.state.cursor;
        let bits_now = self.state.assignment.bits()[l];
        let emb = embed_state(
            &self.spec.layers[l],
            bits_now,
            self.state.quant,
            self.state.acc,
            self.num_layers(),
            self.cfg.cost.max_bits,
        );
        Ok((emb, action_mask(&self.cfg.bitwidths, bits_now, self.cfg.action_mode)))
    }

    /// Writes the bitwidth for `action` into the current layer and advances.
    pub fn apply(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let (_, mask) = self.observe()?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(EnvError::IllegalAction { action });
        }
        let layer = self.state.cursor;
        let bits = self.cfg.bitwidths[action];
        self.state.assignment.set(layer, bits);
        self.state.quant = self.quant_of(&self.state.assignment);
        self.state.cursor += 1;
        let last = self.state.cursor == self.num_layers();
        let mut diverged = false;
        let reward = if self.mode == RewardMode::PerStep || last {
            match self.model.relative_accuracy(&self.state.assignment) {
                Ok(acc) => {
                    self.state.acc = acc;
                    compute_reward(self.state.quant, acc, &self.cfg.reward)
                }
                Err(EnvError::Nn(NnError::Diverged { .. })) => {
                    diverged = true;
                    self.state.acc = 0.0;
                    self.state.aborted = true;
                    -1.0
                }
                Err(e) => return Err(e),
            }
        } else {
            0.0
        };
        Ok(StepOutcome {
            layer,
            bits,
            reward,
            quant: self.state.quant,
            acc: self.state.acc,
            done: self.is_done(),
            diverged,
            probs: Vec::new(),
        })
    }

    /// One agent decision: observe, sample from the masked policy, apply.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        agent: &Agent,
        rollout: &mut RolloutState,
        rng: &mut R,
    ) -> Result<(Step, StepOutcome), EnvError> {
        let (embedding, mask) = self.observe()?;
        let d = agent.act(&embedding, rollout, &mask, rng);
        let mut out = self.apply(d.action)?;
        out.probs = d.probs;
        let step = Step { embedding, mask, action: d.action, log_prob: d.log_prob, value: d.value, reward: out.reward };
        Ok((step, out))
    }
}
