use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::accuracy::AccuracyModel;
use super::environment::{EnvConfig, QuantEnv};
use super::error::EnvError;
use crate::agent::{ActionMode, Agent, AgentParams, PpoConfig, Trajectory, UpdateStats};
use crate::cost::QuantAssignment;
use crate::nn::NetworkSpec;
use crate::seed::SeedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    /// Reward of the last step, i.e. of the complete assignment.
    pub terminal_reward: f64,
    pub quant: f64,
    pub acc: f64,
    pub bits: Vec<u32>,
    /// Per layer, the masked action distribution at decision time.
    pub probs: Vec<Vec<f64>>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSolution {
    pub assignment: QuantAssignment,
    pub reward: f64,
    pub quant: f64,
    pub acc: f64,
    /// Episode that found it; `None` for the initial uniform assignment.
    pub episode: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: BestSolution,
    /// Argmax-policy assignment after the last update.
    pub greedy: QuantAssignment,
    /// Accuracy of `best` after the long retrain, when the model provides one.
    pub final_accuracy: Option<f64>,
    pub episodes: Vec<EpisodeLog>,
    pub updates: Vec<UpdateStats>,
    pub agent: AgentParams,
    pub elapsed_secs: f64,
}

/// Plays one episode with the sampling policy.
pub fn run_episode<M: AccuracyModel + ?Sized, R: Rng + ?Sized>(
    env: &mut QuantEnv<'_, M>,
    agent: &Agent,
    rng: &mut R,
    episode: usize,
) -> Result<(Trajectory, EpisodeLog), EnvError> {
    let mut rollout = agent.start_episode();
    let mut traj = Trajectory::default();
    let mut probs = Vec::with_capacity(env.num_layers());
    let mut diverged = false;
    while !env.is_done() {
        let (step, out) = env.step(agent, &mut rollout, rng)?;
        probs.push(out.probs);
        diverged |= out.diverged;
        traj.steps.push(step);
    }
    traj.terminal = true;
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let st = env.state();
    let log = EpisodeLog {
        episode,
        mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        terminal_reward: *rewards.last().expect("at least one step"),
        quant: st.quant,
        acc: st.acc,
        bits: st.assignment.bits().to_vec(),
        probs,
        diverged,
    };
    Ok((traj, log))
}

/// Walks the layers taking the most probable legal action at each step
/// (lowest index on ties). No accuracy estimates are requested.
pub fn greedy_assignment(agent: &Agent, spec: &NetworkSpec, cfg: &EnvConfig, start: QuantAssignment) -> QuantAssignment {
    let mut bitwidths = cfg.bitwidths.clone();
    bitwidths.sort_unstable();
    bitwidths.dedup();
    let costs: Vec<f64> = spec.layers.iter().map(|l| crate::cost::layer_cost(l, &cfg.cost)).collect();
    let mut a = start;
    let mut rollout = agent.start_episode();
    let quant = |a: &QuantAssignment| crate::cost::state_of_quantization_from_costs(&costs, a.bits(), cfg.cost.max_bits);
    let mut q = quant(&a);
    for (l, layer) in spec.layers.iter().enumerate() {
        let now = a.bits()[l];
        let emb = crate::agent::embed_state(layer, now, q, 1.0, spec.num_layers(), cfg.cost.max_bits);
        let mask = crate::agent::action_mask(&bitwidths, now, cfg.action_mode);
        let (probs, _) = agent.observe(&emb, &mut rollout, &mask);
        let best = probs
            .iter()
            .enumerate()
            .fold(0, |bi, (i, &p)| if p > probs[bi] { i } else { bi });
        a.set(l, bitwidths[best]);
        q = quant(&a);
    }
    a
}

fn better(candidate: &BestSolution, incumbent: &BestSolution) -> bool {
    candidate.reward > incumbent.reward || (candidate.reward == incumbent.reward && candidate.quant < incumbent.quant)
}

/// Runs `ppo.episodes` episodes with a PPO update every
/// `ppo.episodes_per_update` episodes, tracks the best complete assignment by
/// terminal reward (ties: lower quant, then earlier episode) and finally asks
/// the model for the long-retrain accuracy of that assignment.
///
/// `on_episode` sees every log as soon as the episode ends, so logs written
/// from it survive a later error.
pub fn run_search<M: AccuracyModel + ?Sized>(
    spec: &NetworkSpec,
    model: &M,
    env_cfg: &EnvConfig,
    ppo: &PpoConfig,
    on_episode: &mut dyn FnMut(&EpisodeLog) -> Result<(), EnvError>,
) -> Result<SearchResult, EnvError> {
    let started = Instant::now();
    let mut env = QuantEnv::new(spec, model, env_cfg.clone())?;
    let mut agent = Agent::new(env.bitwidths().len(), ppo.clone())?;
    let mut rng = SeedTree::new(ppo.seed).child("rollout").rng();
    let uniform = QuantAssignment::uniform(spec.num_layers(), env_cfg.cost.max_bits);
    let mut best = BestSolution {
        assignment: uniform.clone(),
        reward: super::reward::compute_reward(1.0, 1.0, &env_cfg.reward),
        quant: 1.0,
        acc: 1.0,
        episode: None,
    };
    let mut found = false;
    let mut start = uniform;
    let mut pending = Vec::with_capacity(ppo.episodes_per_update);
    let mut episodes = Vec::with_capacity(ppo.episodes);
    let mut updates = Vec::new();
    for ep in 0..ppo.episodes {
        match env_cfg.action_mode {
            ActionMode::Flexible => {
                env.reset();
            }
            ActionMode::Restricted => {
                env.reset_to(start.clone())?;
            }
        }
        let (traj, log) = run_episode(&mut env, &agent, &mut rng, ep)?;
        on_episode(&log)?;
        if !log.diverged {
            let cand = BestSolution {
                assignment: QuantAssignment::new(log.bits.clone()),
                reward: log.terminal_reward,
                quant: log.quant,
                acc: log.acc,
                episode: Some(ep),
            };
            if !found || better(&cand, &best) {
                best = cand;
                found = true;
            }
            start = QuantAssignment::new(log.bits.clone());
        }
        episodes.push(log);
        pending.push(traj);
        if pending.len() == ppo.episodes_per_update || ep + 1 == ppo.episodes {
            updates.push(agent.update(&pending)?);
            pending.clear();
        }
    }
    let greedy_start = match env_cfg.action_mode {
        ActionMode::Flexible => QuantAssignment::uniform(spec.num_layers(), env_cfg.cost.max_bits),
        ActionMode::Restricted => start,
    };
    let greedy = greedy_assignment(&agent, spec, env.config(), greedy_start);
    let final_accuracy = model.final_accuracy(&best.assignment)?;
    Ok(SearchResult {
        best,
        greedy,
        final_accuracy,
        episodes,
        updates,
        agent: agent.params.clone(),
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
