use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::embedding::{StateEmbedding, EMBEDDING_DIM};
use super::error::AgentError;
use super::gae::gae_advantages;
use super::net::{HiddenState, NetShape, RecurrentNet};
use super::policy::{entropy, log_softmax_masked, sample_action, softmax, softmax_masked};
use crate::seed::SeedTree;

pub const POLICY_HEAD: [usize; 2] = [128, 128];
pub const VALUE_HEAD: [usize; 2] = [128, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub adam_step_size: f64,
    /// GAE λ.
    pub gae_parameter: f64,
    pub discount_gamma: f64,
    /// Optimization passes over each collected batch.
    pub update_epochs: usize,
    pub clip_epsilon: f64,
    /// Entropy bonus weight; 0 disables the bonus.
    pub entropy_coeff: f64,
    pub episodes: usize,
    /// Episodes collected before each update.
    pub episodes_per_update: usize,
    /// LSTM trunk when true, a dense tanh trunk otherwise.
    pub recurrent: bool,
    pub lstm_hidden: usize,
    /// Agent stream seed. Not part of the serialized form; runners derive it
    /// from their root seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            adam_step_size: 1e-4,
            gae_parameter: 0.99,
            discount_gamma: 0.99,
            update_epochs: 3,
            clip_epsilon: 0.1,
            entropy_coeff: 0.01,
            episodes: 500,
            episodes_per_update: 1,
            recurrent: true,
            lstm_hidden: 64,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!("clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if self.update_epochs == 0 {
            return bad("update_epochs must be >= 1".into());
        }
        if !(self.adam_step_size > 0.0 && self.adam_step_size.is_finite()) {
            return bad(format!("adam_step_size must be > 0, got {}", self.adam_step_size));
        }
        if !(0.0..=1.0).contains(&self.gae_parameter) || !(0.0..=1.0).contains(&self.discount_gamma) {
            return bad("gae_parameter and discount_gamma must lie in [0, 1]".into());
        }
        if !(self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite()) {
            return bad(format!("entropy_coeff must be >= 0, got {}", self.entropy_coeff));
        }
        if self.episodes_per_update == 0 || self.lstm_hidden == 0 {
            return bad("episodes_per_update and lstm_hidden must be >= 1".into());
        }
        Ok(())
    }
}

/// Policy and value networks.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub policy: RecurrentNet,
    pub value: RecurrentNet,
}

impl AgentParams {
    pub fn shapes(n_actions: usize, hidden: usize, recurrent: bool) -> (NetShape, NetShape) {
        (
            NetShape { input: EMBEDDING_DIM, hidden, recurrent, head: POLICY_HEAD.to_vec(), output: n_actions },
            NetShape { input: EMBEDDING_DIM, hidden, recurrent, head: VALUE_HEAD.to_vec(), output: 1 },
        )
    }

    pub fn init<R: Rng + ?Sized>(n_actions: usize, hidden: usize, recurrent: bool, rng: &mut R) -> Self {
        let (ps, vs) = Self::shapes(n_actions, hidden, recurrent);
        Self { policy: RecurrentNet::init(ps, 0.01, rng), value: RecurrentNet::init(vs, 1.0, rng) }
    }

    pub fn n_actions(&self) -> usize {
        self.policy.shape().output
    }

    /// Action distribution after feeding `sequence` from the zero state.
    pub fn policy_forward(&self, sequence: &[StateEmbedding]) -> (Vec<f64>, HiddenState) {
        let mut st = self.policy.initial_state();
        let mut logits = vec![0.0; self.n_actions()];
        for e in sequence {
            logits = self.policy.step(e.as_slice(), &mut st);
        }
        (softmax(&logits), st)
    }
}

/// LSTM state of both networks during a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutState {
    pub policy: HiddenState,
    pub value: HiddenState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    /// Distribution the action was drawn from (after masking).
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub embedding: StateEmbedding,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

/// One episode: a step per network layer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal: bool,
}

/// Training samples for one episode, with advantages already computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSamples {
    pub embeddings: Vec<StateEmbedding>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PpoBatch {
    pub sequences: Vec<SequenceSamples>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.sequences.iter().map(|s| s.actions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoLoss {
    /// Negative clipped surrogate minus the entropy bonus.
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub surrogate: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub first: PpoLoss,
    pub last: PpoLoss,
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Shifts to zero mean and scales to unit (population) variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

/// Clipped-surrogate PPO objective (to minimize) with entropy bonus and MSE
/// value loss, and its gradients `(policy, value)`.
pub fn ppo_loss_and_grad(
    params: &AgentParams,
    batch: &PpoBatch,
    clip_epsilon: f64,
    entropy_coeff: f64,
) -> Result<(PpoLoss, Vec<f64>, Vec<f64>), AgentError> {
    let n = batch.len();
    if n == 0 {
        return Err(AgentError::EmptyBatch);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = PpoLoss::default();
    let mut g_pol = vec![0.0; params.policy.params().len()];
    let mut g_val = vec![0.0; params.value.params().len()];
    let mut clipped = 0usize;
    for seq in &batch.sequences {
        let xs: Vec<&[f64]> = seq.embeddings.iter().map(|e| e.as_slice()).collect();
        let cp = params.policy.forward_sequence(&xs);
        let cv = params.value.forward_sequence(&xs);
        let mut d_logits = Vec::with_capacity(xs.len());
        let mut d_values = Vec::with_capacity(xs.len());
        for (t, (logits, v)) in cp.outputs().into_iter().zip(cv.outputs()).enumerate() {
            let mask = &seq.masks[t];
            let logp = log_softmax_masked(logits, mask);
            let p = softmax_masked(logits, mask);
            let a = seq.actions[t];
            let adv = seq.advantages[t];
            let ratio = (logp[a] - seq.old_log_probs[t]).exp();
            let unclipped = ratio * adv;
            let clip_term = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv;
            let surrogate = unclipped.min(clip_term);
            let d_surr_d_logp = if unclipped <= clip_term { ratio * adv } else { 0.0 };
            if (ratio - 1.0).abs() > clip_epsilon {
                clipped += 1;
            }
            let h = entropy(&p);
            loss.surrogate += surrogate * inv_n;
            loss.entropy += h * inv_n;
            let mut dl = vec![0.0; logits.len()];
            for j in 0..logits.len() {
                if !mask[j] {
                    continue;
                }
                let dlogp = if j == a { 1.0 } else { 0.0 } - p[j];
                let dh = if p[j] > 0.0 { -p[j] * (p[j].ln() + h) } else { 0.0 };
                dl[j] = (-d_surr_d_logp * dlogp - entropy_coeff * dh) * inv_n;
            }
            d_logits.push(dl);
            let err = v[0] - seq.returns[t];
            loss.value += err * err * inv_n;
            d_values.push(vec![2.0 * err * inv_n]);
        }
        for (g, d) in g_pol.iter_mut().zip(params.policy.backward(&cp, &d_logits)) {
            *g += d;
        }
        for (g, d) in g_val.iter_mut().zip(params.value.backward(&cv, &d_values)) {
            *g += d;
        }
    }
    loss.policy = -loss.surrogate - entropy_coeff * loss.entropy;
    loss.clip_fraction = clipped as f64 * inv_n;
    Ok((loss, g_pol, g_val))
}

/// PPO learner: networks, optimizer state and hyperparameters.
#[derive(Debug, Clone)]
pub struct Agent {
    pub params: AgentParams,
    pub cfg: PpoConfig,
    adam_policy: Adam,
    adam_value: Adam,
}

impl Agent {
    pub fn new(n_actions: usize, cfg: PpoConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        if n_actions == 0 {
            return Err(AgentError::InvalidConfig("need at least one action".into()));
        }
        let mut rng = SeedTree::new(cfg.seed).child("agent-init").rng();
        let params = AgentParams::init(n_actions, cfg.lstm_hidden, cfg.recurrent, &mut rng);
        Ok(Self::from_params(params, cfg))
    }

    pub fn from_params(params: AgentParams, cfg: PpoConfig) -> Self {
        let adam_policy = Adam::new(params.policy.params().len(), cfg.adam_step_size);
        let adam_value = Adam::new(params.value.params().len(), cfg.adam_step_size);
        Self { params, cfg, adam_policy, adam_value }
    }

    pub fn n_actions(&self) -> usize {
        self.params.n_actions()
    }

    pub fn start_episode(&self) -> RolloutState {
        RolloutState { policy: self.params.policy.initial_state(), value: self.params.value.initial_state() }
    }

    /// Advances both networks by one step and returns the masked distribution
    /// and the value estimate.
    pub fn observe(&self, embedding: &StateEmbedding, state: &mut RolloutState, mask: &[bool]) -> (Vec<f64>, f64) {
        let logits = self.params.policy.step(embedding.as_slice(), &mut state.policy);
        let value = self.params.value.step(embedding.as_slice(), &mut state.value)[0];
        (softmax_masked(&logits, mask), value)
    }

    /// Samples an action from the masked policy.
    pub fn act<R: Rng + ?Sized>(
        &self,
        embedding: &StateEmbedding,
        state: &mut RolloutState,
        mask: &[bool],
        rng: &mut R,
    ) -> Decision {
        let (probs, value) = self.observe(embedding, state, mask);
        let action = sample_action(&probs, rng);
        Decision { action, log_prob: probs[action].ln(), value, probs }
    }

    /// Turns finished episodes into a training batch: GAE per episode, then
    /// advantage normalization across the whole batch.
    pub fn build_batch(&self, trajectories: &[Trajectory]) -> PpoBatch {
        let mut sequences: Vec<SequenceSamples> = trajectories
            .iter()
            .filter(|t| !t.steps.is_empty())
            .map(|t| {
                let rewards: Vec<f64> = t.steps.iter().map(|s| s.reward).collect();
                let values: Vec<f64> = t.steps.iter().map(|s| s.value).collect();
                let bootstrap = if t.terminal { 0.0 } else { *values.last().expect("nonempty") };
                let (advantages, returns) =
                    gae_advantages(&rewards, &values, self.cfg.discount_gamma, self.cfg.gae_parameter, bootstrap);
                SequenceSamples {
                    embeddings: t.steps.iter().map(|s| s.embedding).collect(),
                    masks: t.steps.iter().map(|s| s.mask.clone()).collect(),
                    actions: t.steps.iter().map(|s| s.action).collect(),
                    old_log_probs: t.steps.iter().map(|s| s.log_prob).collect(),
                    advantages,
                    returns,
                }
            })
            .collect();
        let mut all: Vec<f64> = sequences.iter().flat_map(|s| s.advantages.iter().copied()).collect();
        normalize_advantages(&mut all);
        let mut it = all.into_iter();
        for s in &mut sequences {
            for a in &mut s.advantages {
                *a = it.next().expect("same length");
            }
        }
        PpoBatch { sequences }
    }

    /// `update_epochs` Adam steps on the clipped objective over `batch`.
    pub fn update_batch(&mut self, batch: &PpoBatch) -> Result<UpdateStats, AgentError> {
        let mut stats = UpdateStats::default();
        for epoch in 0..self.cfg.update_epochs {
            let (loss, gp, gv) =
                ppo_loss_and_grad(&self.params, batch, self.cfg.clip_epsilon, self.cfg.entropy_coeff)?;
            if !(loss.policy.is_finite() && loss.value.is_finite()) {
                return Err(AgentError::UpdateDiverged("loss"));
            }
            if !gp.iter().chain(&gv).all(|g| g.is_finite()) {
                return Err(AgentError::UpdateDiverged("gradient"));
            }
            self.adam_policy.step(self.params.policy.params_mut(), &gp);
            self.adam_value.step(self.params.value.params_mut(), &gv);
            if epoch == 0 {
                stats.first = loss;
            }
            stats.last = loss;
        }
        Ok(stats)
    }

    pub fn update(&mut self, trajectories: &[Trajectory]) -> Result<UpdateStats, AgentError> {
        let batch = self.build_batch(trajectories);
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        self.update_batch(&batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn surrogate_clip_examples() {
        assert_eq!(clipped_surrogate(1.3, 2.0, 0.1), 1.1 * 2.0);
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.1), 0.7);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    }

    #[test]
    fn unit_ratio_surrogate_is_mean_normalized_advantage() {
        let mut adv = vec![0.3, -1.2, 2.0, 0.1];
        normalize_advantages(&mut adv);
        let s: f64 = adv.iter().map(|&a| clipped_surrogate(1.0, a, 0.1)).sum::<f64>() / adv.len() as f64;
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn zero_weight_policy_is_uniform() {
        let (ps, vs) = AgentParams::shapes(7, 8, true);
        let params = AgentParams { policy: RecurrentNet::zeros(ps), value: RecurrentNet::zeros(vs) };
        let e = StateEmbedding([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let (d, _) = params.policy_forward(&[e, e]);
        assert!(d.iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn architecture_widths() {
        let agent = Agent::new(7, PpoConfig::default()).unwrap();
        assert_eq!(agent.params.policy.shape().head, vec![128, 128]);
        assert_eq!(agent.params.value.shape().head, vec![128, 64]);
        assert_eq!(agent.params.policy.shape().hidden, 64);
        assert_eq!(agent.params.policy.shape().output, 7);
    }

    #[test]
    fn zero_advantages_leave_params_unchanged() {
        let cfg = PpoConfig { entropy_coeff: 0.0, ..Default::default() };
        let mut agent = Agent::new(3, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let embeddings: Vec<StateEmbedding> =
            (0..3).map(|i| StateEmbedding([i as f64 / 3.0, 0.2, 0.3, 0.1, 1.0, 1.0, 1.0])).collect();
        let mut st = agent.start_episode();
        let mut seq = SequenceSamples {
            embeddings: embeddings.clone(),
            masks: vec![vec![true; 3]; 3],
            actions: vec![],
            old_log_probs: vec![],
            advantages: vec![0.0; 3],
            returns: vec![],
        };
        for e in &embeddings {
            let d = agent.act(e, &mut st, &[true; 3], &mut rng);
            seq.actions.push(d.action);
            seq.old_log_probs.push(d.log_prob);
            seq.returns.push(d.value);
        }
        let before = agent.params.clone();
        agent.update_batch(&PpoBatch { sequences: vec![seq] }).unwrap();
        assert_eq!(agent.params, before);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            PpoConfig { clip_epsilon: 0.0, ..Default::default() },
            PpoConfig { clip_epsilon: 1.0, ..Default::default() },
            PpoConfig { update_epochs: 0, ..Default::default() },
        ] {
            assert!(matches!(Agent::new(3, cfg), Err(AgentError::InvalidConfig(_))));
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let mut agent = Agent::new(3, PpoConfig::default()).unwrap();
        assert!(matches!(agent.update(&[]), Err(AgentError::EmptyBatch)));
    }
}
