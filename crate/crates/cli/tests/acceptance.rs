//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --release --test acceptance`, or a subset
//! by naming criteria: `cargo test --test acceptance -- C2 C9`. The process
//! exits nonzero if any selected criterion fails.
//!
//! C7 and C8 use the LeNet-style glyph fixture (`configs/lenet_glyphs.toml`),
//! or MNIST when `MPQ_MNIST_DIR` names a directory holding the four IDX files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mpq_cli::commands::{self, ValidateArgs, SEARCH_REPORT};
use mpq_cli::config::RunConfig;
use mpq_cli::logs::POINTS_FILE;
use mpq_core::agent::{
    log_softmax_masked, ppo_loss_and_grad, Agent, AgentParams, NetShape, PpoBatch, PpoConfig, RecurrentNet, SequenceSamples,
    StateEmbedding, Step, Trajectory, EMBEDDING_DIM,
};
use mpq_core::cost::{state_of_quantization, state_of_quantization_from_costs};
use mpq_core::env::{
    compute_reward, run_search, EnvConfig, EpisodeLog, OracleAccuracy, RewardFormulation, RewardParams,
};
use mpq_core::nn::{
    backward, forward, forward_cached, init_weights, mean_distance_to_grid, quantize_weight, sinreq_grad,
    sinreq_loss, softmax_cross_entropy, train, evaluate_accuracy, weight_decay_grad, weight_decay_loss, LayerDef,
    NetworkSpec, NetworkWeights, Tensor, TrainConfig,
};
use mpq_core::pareto::{all_assignments, pareto_frontier, ParetoPoint};
use mpq_core::seed::SeedTree;
use mpq_core::{CostParams, QuantAssignment};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 11] = [
    ("C1", "quantizer matches brute-force nearest level", c1_quantizer),
    ("C2", "reward values, threshold branch, monotonicity", c2_reward),
    ("C3", "state of quantization", c3_state_of_quantization),
    ("C4", "analytic gradients vs central differences", c4_gradients),
    ("C5", "PPO on the 3-armed bandit", c5_bandit),
    ("C6", "toy environment optimum", c6_toy_optimum),
    ("C7", "end-to-end LeNet-scale reproduction", c7_end_to_end),
    ("C8", "sinusoidal regularizer pulls weights to the grid", c8_sinreq),
    ("C9", "Pareto frontier vs O(n^2) oracle", c9_pareto),
    ("C10", "reward-formulation sensitivity", c10_formulations),
    ("C11", "determinism of CLI outputs", c11_determinism),
];

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.iter().any(|w| w.eq_ignore_ascii_case(id)) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{id:<4} {verdict} {name} [{:.1}s] {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- C1

/// Nearest level `i/m` to the exact value of `w`, ties away from zero, decided
/// in exact integer arithmetic on the float's binary expansion.
fn nearest_level_exact(w: f64, m: i128) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let bits = w.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mant = (bits & ((1 << 52) - 1)) | if exp == 0 { 0 } else { 1 << 52 };
    // |w| = mant * 2^(exp - 1075); compare |mant*m - i*2^s| over a common denominator.
    let shift = 1075 - exp.max(1);
    assert!((0..100).contains(&shift));
    let num = mant as i128 * m;
    let unit = 1_i128 << shift;
    let mut best = 0_i128;
    let mut best_gap = num;
    for i in 1..=m {
        let gap = (num - i * unit).abs();
        // `<=` with ascending i: ties resolve to the larger magnitude.
        if gap <= best_gap {
            best = i;
            best_gap = gap;
        }
    }
    best as f64 / m as f64 * w.signum()
}

fn c1_quantizer() -> Outcome {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut checked = 0;
    for k in 2..=8u32 {
        let m = (1_i128 << (k - 1)) - 1;
        for j in 0..=10_000 {
            let w = -1.0 + 2.0 * j as f64 / 10_000.0;
            let got = quantize_weight(w, k).unwrap();
            let want = nearest_level_exact(w, m);
            if got != want {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(mismatches == 0 && secs < 1.0, format!("{checked} points, {mismatches} mismatches, {secs:.3}s (< 1s)"))
}

// ---------------------------------------------------------------- C2

fn c2_reward() -> Outcome {
    let shaped = RewardParams::default();
    let ratio = RewardParams { formulation: RewardFormulation::Ratio, ..shaped };
    let points = [
        (compute_reward(0.7, 0.39, &shaped), -1.0),
        (compute_reward(1.0, 1.0, &shaped), 0.0),
        (compute_reward(0.5, 1.0, &shaped), 1.0 - 0.5f64.powf(0.2)),
        (compute_reward(0.5, 1.0, &ratio), 2.0),
    ];
    let values_ok = points.iter().all(|(got, want)| (got - want).abs() <= 1e-9)
        && (compute_reward(0.5, 1.0, &shaped) - 0.129449).abs() < 1e-6;

    let below = f64::from_bits(0.4f64.to_bits() - 1);
    let mut branch_ok = compute_reward(0.5, 0.4, &shaped) != -1.0 && compute_reward(0.5, below, &shaped) == -1.0;
    let mut violations = 0;
    let n = 100;
    let q = |i: usize| (i + 1) as f64 / n as f64;
    let a = |j: usize| 1.1 * j as f64 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            let r = compute_reward(q(i), a(j), &shaped);
            branch_ok &= (r == -1.0) == (a(j) < 0.4);
            if i + 1 < n && compute_reward(q(i + 1), a(j), &shaped) > r {
                violations += 1;
            }
            if j + 1 < n && compute_reward(q(i), a(j + 1), &shaped) < r {
                violations += 1;
            }
        }
    }
    outcome(
        values_ok && branch_ok && violations == 0,
        format!("hand points ok: {values_ok}, -1 branch exactly below 0.4: {branch_ok}, monotonicity violations: {violations}"),
    )
}

// ---------------------------------------------------------------- C3

fn random_spec<R: Rng>(rng: &mut R) -> NetworkSpec {
    let mut defs = Vec::new();
    let conv = rng.random_bool(0.5);
    let input: Vec<usize> = if conv {
        let side = rng.random_range(5..10);
        for _ in 0..rng.random_range(1..3) {
            defs.push(LayerDef::Conv2d { out_channels: rng.random_range(1..6), kernel: 3 });
        }
        vec![rng.random_range(1..3), side + 4, side + 4]
    } else {
        vec![rng.random_range(1..40)]
    };
    for _ in 0..rng.random_range(1..4) {
        defs.push(LayerDef::Dense { units: rng.random_range(1..50) });
    }
    defs.push(LayerDef::Dense { units: rng.random_range(2..10) });
    NetworkSpec::build("random", &input, &defs).unwrap()
}

fn c3_state_of_quantization() -> Outcome {
    let p = CostParams::default();
    let mut rng = SeedTree::new(3).rng();
    let mut uniform_bad = 0;
    let mut monotone_bad = 0;
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let l = spec.num_layers();
        for b in 2..=8 {
            if state_of_quantization(&spec, &QuantAssignment::uniform(l, b), &p).unwrap() != b as f64 / 8.0 {
                uniform_bad += 1;
            }
        }
        let mut bits: Vec<u32> = (0..l).map(|_| rng.random_range(2..=7)).collect();
        let before = state_of_quantization(&spec, &QuantAssignment::new(bits.clone()), &p).unwrap();
        let layer = rng.random_range(0..l);
        bits[layer] += 1;
        let after = state_of_quantization(&spec, &QuantAssignment::new(bits), &p).unwrap();
        if after <= before {
            monotone_bad += 1;
        }
    }
    let hand = state_of_quantization_from_costs(&[100.0, 300.0], &[2, 4], 8);
    let hand_ok = (hand - 0.4375).abs() <= 1e-12;
    outcome(
        uniform_bad == 0 && monotone_bad == 0 && hand_ok,
        format!("uniform-b != b/8: {uniform_bad}, two-layer example {hand} (0.4375), non-increasing bumps: {monotone_bad}/1000"),
    )
}

// ---------------------------------------------------------------- C4

const FD_H: f64 = 1e-5;

/// Worst relative error between analytic and central-difference gradients.
/// Pairs whose absolute gap is below 1e-10 count as exact (round-off floor).
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let gap = (analytic - numeric).abs();
    if gap < 1e-10 {
        0.0
    } else {
        gap / analytic.abs().max(numeric.abs())
    }
}

fn random_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn network_grad_worst(spec: &NetworkSpec, seed: u64) -> f64 {
    let mut rng = SeedTree::new(seed).rng();
    let mut w = init_weights(spec, &mut rng);
    for l in &mut w.layers {
        for b in l.bias.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let mut shape = vec![3];
    shape.extend_from_slice(&spec.input_dims);
    let x = random_tensor(&mut rng, shape, 1.0);
    let y: Vec<usize> = (0..3).map(|_| rng.random_range(0..spec.num_classes)).collect();
    let loss = |w: &NetworkWeights| softmax_cross_entropy(&forward(spec, w, &x, None).unwrap(), &y).unwrap().0;
    let cache = forward_cached(spec, &w, &x, None).unwrap();
    let (_, d_logits) = softmax_cross_entropy(&cache.logits(spec.num_classes), &y).unwrap();
    let g = backward(spec, &cache, &d_logits).unwrap();
    let mut worst: f64 = 0.0;
    for li in 0..w.layers.len() {
        for (which, n) in [(0, w.layers[li].weight.len()), (1, w.layers[li].bias.len())] {
            for i in 0..n {
                let nudged = |delta: f64| {
                    let mut v = w.clone();
                    let l = &mut v.layers[li];
                    let t = if which == 0 { &mut l.weight } else { &mut l.bias };
                    t.data_mut()[i] += delta;
                    v
                };
                let (plus, minus) = (nudged(FD_H), nudged(-FD_H));
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * FD_H);
                let an = if which == 0 { g.layers[li].weight.data()[i] } else { g.layers[li].bias.data()[i] };
                worst = worst.max(rel_err(an, fd));
            }
        }
    }
    worst
}

fn cross_entropy_worst(seed: u64) -> f64 {
    let mut rng = SeedTree::new(seed).rng();
    let logits = random_tensor(&mut rng, vec![4, 5], 3.0);
    let y: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
    let (_, g) = softmax_cross_entropy(&logits, &y).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..logits.len() {
        let mut p = logits.clone();
        p.data_mut()[i] += FD_H;
        let mut m = logits.clone();
        m.data_mut()[i] -= FD_H;
        let fd = (softmax_cross_entropy(&p, &y).unwrap().0 - softmax_cross_entropy(&m, &y).unwrap().0) / (2.0 * FD_H);
        worst = worst.max(rel_err(g.data()[i], fd));
    }
    worst
}

fn regularizer_worst(seed: u64, sinreq: bool) -> f64 {
    let mut rng = SeedTree::new(seed).rng();
    let w = random_tensor(&mut rng, vec![12], 1.0);
    let qbits = rng.random_range(1..=4);
    let lambda = rng.random_range(0.01..1.0);
    let loss = |t: &Tensor| if sinreq { sinreq_loss(t, qbits, lambda) } else { weight_decay_loss(t, lambda) };
    let mut g = vec![0.0; w.len()];
    if sinreq {
        sinreq_grad(&w, qbits, lambda, &mut g);
    } else {
        weight_decay_grad(&w, lambda, &mut g);
    }
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let mut p = w.clone();
        p.data_mut()[i] += FD_H;
        let mut m = w.clone();
        m.data_mut()[i] -= FD_H;
        worst = worst.max(rel_err(g[i], (loss(&p) - loss(&m)) / (2.0 * FD_H)));
    }
    worst
}

fn lstm_worst(seed: u64) -> f64 {
    let mut rng = SeedTree::new(seed).rng();
    let shape = NetShape { input: 3, hidden: 4, recurrent: true, head: vec![5, 3], output: 2 };
    let net = RecurrentNet::init(shape, 1.0, &mut rng);
    let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let up: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let objective = |n: &RecurrentNet| -> f64 {
        let c = n.forward_sequence(&refs);
        c.outputs().iter().zip(&up).map(|(o, u)| o.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()).sum()
    };
    let g = net.backward(&net.forward_sequence(&refs), &up);
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let mut p = net.clone();
        p.params_mut()[i] += FD_H;
        let mut m = net.clone();
        m.params_mut()[i] -= FD_H;
        worst = worst.max(rel_err(g[i], (objective(&p) - objective(&m)) / (2.0 * FD_H)));
    }
    worst
}

/// Policy and value heads through the PPO objective, on a 2-step sequence.
fn heads_worst(seed: u64) -> f64 {
    let mut rng = SeedTree::new(seed).rng();
    let shape = |out| NetShape { input: EMBEDDING_DIM, hidden: 4, recurrent: true, head: vec![6, 5], output: out };
    let params = AgentParams {
        policy: RecurrentNet::init(shape(3), 1.0, &mut rng),
        value: RecurrentNet::init(shape(1), 1.0, &mut rng),
    };
    let embeddings: Vec<StateEmbedding> = (0..2)
        .map(|_| StateEmbedding(std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
        .collect();
    let masks = vec![vec![true, true, true], vec![true, false, true]];
    let actions = vec![rng.random_range(0..3), [0, 2][rng.random_range(0..2)]];
    let xs: Vec<&[f64]> = embeddings.iter().map(|e| e.as_slice()).collect();
    let logits: Vec<Vec<f64>> = params.policy.forward_sequence(&xs).outputs().iter().map(|o| o.to_vec()).collect();
    // Old policy a little off the current one, so some ratios are clipped.
    let old_log_probs = (0..2)
        .map(|t| {
            let lp = log_softmax_masked(&logits[t], &masks[t]);
            lp[actions[t]] + rng.random_range(-0.3..0.3)
        })
        .collect();
    let batch = PpoBatch {
        sequences: vec![SequenceSamples {
            embeddings,
            masks,
            actions,
            old_log_probs,
            advantages: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            returns: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        }],
    };
    let (clip, ent) = (0.2, 0.01);
    let (_, gp, gv) = ppo_loss_and_grad(&params, &batch, clip, ent).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..params.policy.params().len() {
        let mut p = params.clone();
        p.policy.params_mut()[i] += FD_H;
        let mut m = params.clone();
        m.policy.params_mut()[i] -= FD_H;
        let lp = ppo_loss_and_grad(&p, &batch, clip, ent).unwrap().0.policy;
        let lm = ppo_loss_and_grad(&m, &batch, clip, ent).unwrap().0.policy;
        worst = worst.max(rel_err(gp[i], (lp - lm) / (2.0 * FD_H)));
    }
    for i in 0..params.value.params().len() {
        let mut p = params.clone();
        p.value.params_mut()[i] += FD_H;
        let mut m = params.clone();
        m.value.params_mut()[i] -= FD_H;
        let lp = ppo_loss_and_grad(&p, &batch, clip, ent).unwrap().0.value;
        let lm = ppo_loss_and_grad(&m, &batch, clip, ent).unwrap().0.value;
        worst = worst.max(rel_err(gv[i], (lp - lm) / (2.0 * FD_H)));
    }
    worst
}

fn c4_gradients() -> Outcome {
    let t = Instant::now();
    let dense = NetworkSpec::build("d", &[4], &[LayerDef::Dense { units: 5 }, LayerDef::Dense { units: 3 }]).unwrap();
    let conv = NetworkSpec::build(
        "c",
        &[2, 5, 5],
        &[LayerDef::Conv2d { out_channels: 3, kernel: 3 }, LayerDef::Dense { units: 3 }],
    )
    .unwrap();
    let suites: [(&str, Box<dyn Fn(u64) -> f64>); 7] = [
        ("dense", Box::new(|s| network_grad_worst(&dense, s))),
        ("conv", Box::new(|s| network_grad_worst(&conv, s))),
        ("cross-entropy", Box::new(cross_entropy_worst)),
        ("weight-decay", Box::new(|s| regularizer_worst(s, false))),
        ("sinreq", Box::new(|s| regularizer_worst(s, true))),
        ("lstm", Box::new(lstm_worst)),
        ("policy/value heads", Box::new(heads_worst)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f) in &suites {
        let worst = (0..100u64).map(|trial| f(1000 + trial)).fold(0.0, f64::max);
        pass &= worst <= 1e-3;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    outcome(pass, format!("worst rel err over 100 trials: {}; {secs:.1}s (< 30s)", parts.join(", ")))
}

// ---------------------------------------------------------------- C5

/// Final probability of the best arm after training on a deterministic
/// 3-armed bandit with rewards {0, 0.5, 1}.
fn bandit_best_arm(seed: u64) -> f64 {
    let cfg = PpoConfig { seed, episodes: 500, episodes_per_update: 5, ..PpoConfig::default() };
    let mut agent = Agent::new(3, cfg).unwrap();
    let mut rng = SeedTree::new(seed).child("rollout").rng();
    let emb = StateEmbedding([0.5; EMBEDDING_DIM]);
    let mask = vec![true; 3];
    let mut batch = Vec::new();
    for _ in 0..500 {
        let mut st = agent.start_episode();
        let d = agent.act(&emb, &mut st, &mask, &mut rng);
        let reward = [0.0, 0.5, 1.0][d.action];
        let step = Step { embedding: emb, mask: mask.clone(), action: d.action, log_prob: d.log_prob, value: d.value, reward };
        batch.push(Trajectory { steps: vec![step], terminal: true });
        if batch.len() == 5 {
            agent.update(&batch).unwrap();
            batch.clear();
        }
    }
    agent.observe(&emb, &mut agent.start_episode(), &mask).0[2]
}

fn c5_bandit() -> Outcome {
    let t = Instant::now();
    let probs: Vec<f64> = (1..=5).map(bandit_best_arm).collect();
    let wins = probs.iter().filter(|&&p| p > 0.9).count();
    let secs = t.elapsed().as_secs_f64();
    let shown: Vec<String> = probs.iter().map(|p| format!("{p:.3}")).collect();
    outcome(wins >= 4 && secs < 60.0, format!("best-arm p per seed [{}]: {wins}/5 > 0.9 (need 4); {secs:.1}s (< 60s)", shown.join(", ")))
}

// ---------------------------------------------------------------- toy env

fn toy_spec() -> NetworkSpec {
    let mut spec = NetworkSpec::build(
        "toy",
        &[16],
        &[LayerDef::Dense { units: 32 }, LayerDef::Dense { units: 16 }, LayerDef::Dense { units: 4 }],
    )
    .unwrap();
    let w = init_weights(&spec, &mut SeedTree::new(0).rng());
    spec.record_weight_stats(&w);
    spec.full_precision_accuracy = Some(1.0);
    spec
}

fn toy_accuracy(a: &QuantAssignment) -> f64 {
    if a.bits().iter().all(|&b| b >= 4) {
        1.0
    } else {
        0.3
    }
}

fn toy_search(seed: u64, formulation: RewardFormulation, episodes: usize) -> (QuantAssignment, Vec<EpisodeLog>) {
    let spec = toy_spec();
    let model = OracleAccuracy::new(toy_accuracy);
    let env = EnvConfig { reward: RewardParams { formulation, ..RewardParams::default() }, ..EnvConfig::default() };
    let ppo = PpoConfig { seed: SeedTree::new(seed).child("agent").seed(), episodes, ..PpoConfig::default() };
    let r = run_search(&spec, &model, &env, &ppo, &mut |_| Ok(())).unwrap();
    (r.best.assignment, r.episodes)
}

fn c6_toy_optimum() -> Outcome {
    let t = Instant::now();
    let spec = toy_spec();
    let p = RewardParams::default();
    let cost = CostParams::default();
    let optimum = all_assignments(3, &(2..=8).collect::<Vec<_>>())
        .into_iter()
        .map(|a| {
            let q = state_of_quantization(&spec, &a, &cost).unwrap();
            (compute_reward(q, toy_accuracy(&a), &p), a)
        })
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap()
        .1;
    let target = QuantAssignment::new(vec![4, 4, 4]);
    let found: Vec<QuantAssignment> = (1..=5).map(|s| toy_search(s, RewardFormulation::Shaped, 1000).0).collect();
    let hits = found.iter().filter(|a| **a == target).count();
    let secs = t.elapsed().as_secs_f64();
    let shown: Vec<String> = found.iter().map(|a| mpq_cli::logs::join_bits(a.bits())).collect();
    outcome(
        optimum == target && hits >= 4 && secs < 120.0,
        format!(
            "exhaustive optimum {}, found [{}]: {hits}/5 (need 4); {secs:.1}s (< 120s)",
            mpq_cli::logs::join_bits(optimum.bits()),
            shown.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- C10

/// Episodes until the trailing 50-episode mean of relative accuracy first
/// reaches 0.95; `None` if it never does.
fn episodes_to_threshold(logs: &[EpisodeLog]) -> Option<usize> {
    let acc: Vec<f64> = logs.iter().map(|l| l.acc).collect();
    (50..=acc.len()).find(|&end| acc[end - 50..end].iter().sum::<f64>() / 50.0 >= 0.95)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn c10_formulations() -> Outcome {
    let budget = 1000;
    let mut medians = Vec::new();
    let mut parts = Vec::new();
    for (name, f) in [
        ("shaped", RewardFormulation::Shaped),
        ("ratio", RewardFormulation::Ratio),
        ("difference", RewardFormulation::Difference),
    ] {
        // A run that never reaches the threshold counts as budget + 1.
        let hits: Vec<f64> = (1..=5)
            .map(|s| episodes_to_threshold(&toy_search(s, f, budget).1).map_or(budget as f64 + 1.0, |e| e as f64))
            .collect();
        let m = median(hits.clone());
        parts.push(format!("{name} median {m} {hits:?}"));
        medians.push(m);
    }
    let slack = 1.2;
    let pass = medians[0] <= slack * medians[1] && medians[0] <= slack * medians[2];
    outcome(pass, format!("episodes to trailing-50 acc >= 0.95: {}; shaped must be <= 1.2x each", parts.join("; ")))
}

// ---------------------------------------------------------------- C7 / C8

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The LeNet-style fixture config, pointed at MNIST when available.
fn lenet_config(seed: u64, out: &Path) -> (RunConfig, &'static str) {
    let (mut cfg, name) = match std::env::var_os("MPQ_MNIST_DIR") {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            let mut text = fs::read_to_string(workspace_root().join("configs/lenet_mnist.toml")).unwrap();
            text = text.replace("../data/mnist", &dir.display().to_string());
            let cfg = RunConfig::parse(&text).unwrap();
            cfg.validate().unwrap();
            (cfg, "MNIST")
        }
        None => (RunConfig::load(&workspace_root().join("configs/lenet_glyphs.toml")).unwrap(), "glyphs"),
    };
    cfg.seed = seed;
    cfg.output_dir = out.to_path_buf();
    (cfg, name)
}

fn c7_end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut enumerate_secs: f64 = 0.0;
    let mut passes = 0;
    let mut worst_loss: f64 = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    let mut dataset = "";
    for seed in 1..=5 {
        let (cfg, name) = lenet_config(seed, &tmp.path().join(format!("seed{seed}")));
        dataset = name;
        commands::train_baseline(&cfg).unwrap();
        let t = Instant::now();
        commands::enumerate(&cfg, 1).unwrap();
        enumerate_secs = enumerate_secs.max(t.elapsed().as_secs_f64());
        let report = commands::search(&cfg).unwrap();
        let args = ValidateArgs {
            points: cfg.output_dir.join(POINTS_FILE),
            solution: cfg.output_dir.join(SEARCH_REPORT),
            eps_quant: 0.05,
            eps_acc: 0.005,
            out: cfg.output_dir.clone(),
        };
        let verdict = match commands::validate(&args, Some(&cfg)) {
            Ok(_) => "PASS",
            Err(mpq_cli::CliError::ValidationFailed(_)) => "FAIL",
            Err(e) => panic!("validate: {e}"),
        };
        passes += usize::from(verdict == "PASS");
        worst_loss = worst_loss.max(report.accuracy_loss);
        lines.push(format!(
            "seed {seed}: {} quant {:.4} validate {verdict} loss {:.4}",
            report.assignment, report.quant, report.accuracy_loss
        ));
    }
    // Accuracies are multiples of 1/N; the slack only absorbs the rounding of
    // their difference.
    let loss_ok = worst_loss <= 0.003 + 1e-12;
    let time_ok = enumerate_secs < 1800.0;
    outcome(
        time_ok && passes >= 3 && loss_ok,
        format!(
            "{dataset}: (a) slowest enumerate {enumerate_secs:.0}s (< 1800s) {}; (b) {passes}/5 PASS (need 3) {}; (c) worst loss {worst_loss:.4} (<= 0.003) {}; {}",
            ok(time_ok),
            ok(passes >= 3),
            ok(loss_ok),
            lines.join("; ")
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn c8_sinreq() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, dataset) = lenet_config(1, tmp.path());
    commands::train_baseline(&cfg).unwrap();
    let b = commands::load_baseline(&cfg, tmp.path()).unwrap();
    let qbits = 3;
    let budget = |lambda_q| TrainConfig {
        learning_rate: 0.01,
        epochs: 5,
        lambda_q,
        sinreq_bits: qbits,
        seed: SeedTree::new(cfg.seed).child("sinreq").seed(),
        ..TrainConfig::default()
    };
    let spec = &b.report.spec;
    let run = |lambda_q| {
        let w = train(spec, &b.weights, &b.splits.train, &budget(lambda_q), None).unwrap().weights;
        (mean_distance_to_grid(&w, qbits), evaluate_accuracy(spec, &w, &b.splits.validation, None).unwrap())
    };
    let (d0, a0) = run(0.0);
    let (d1, a1) = run(1e-3);
    let reduction = 1.0 - d1 / d0;
    let pass = reduction >= 0.5 && (a1 - a0).abs() <= 0.01;
    outcome(
        pass,
        format!(
            "{dataset}, 3-bit grid, 5 epochs: distance {d0:.5} (lambda_q 0) -> {d1:.5} (lambda_q 1e-3), reduction {:.1}% (>= 50%); accuracy {a0:.4} vs {a1:.4} (within 1%)",
            100.0 * reduction
        ),
    )
}

// ---------------------------------------------------------------- C9

fn c9_pareto() -> Outcome {
    let mut rng = SeedTree::new(9).rng();
    let mut mismatches = 0;
    for cloud in 0..50 {
        let n = if cloud == 0 { 2000 } else { rng.random_range(1..=2000) };
        let points: Vec<ParetoPoint> = (0..n)
            .map(|i| ParetoPoint {
                assignment: QuantAssignment::new(vec![i as u32]),
                quant: rng.random_range(0.0..1.0),
                acc: rng.random_range(0.0..1.0),
            })
            .collect();
        let oracle: BTreeSet<u32> = points
            .iter()
            .filter(|p| {
                !points.iter().any(|q| {
                    q.quant <= p.quant && q.acc >= p.acc && (q.quant < p.quant || q.acc > p.acc)
                })
            })
            .map(|p| p.assignment.bits()[0])
            .collect();
        let got: BTreeSet<u32> = pareto_frontier(&points).unwrap().iter().map(|p| p.assignment.bits()[0]).collect();
        if got != oracle {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("50 clouds (n <= 2000), {mismatches} set mismatches"))
}

// ---------------------------------------------------------------- C11

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = workspace_root().join("configs/blobs.toml");
    let run_all = |out: &Path| {
        let cfg = config.to_str().unwrap();
        let o = out.to_str().unwrap();
        for cmd in ["train-baseline", "search", "enumerate"] {
            mpq_cli::run(["mpq", "--config", cfg, "--out", o, "--jobs", "2", cmd]).unwrap();
        }
        mpq_cli::run(["mpq", "--config", cfg, "--out", o, "validate"]).ok();
        mpq_cli::run(["mpq", "--out", o, "report", o]).unwrap();
    };
    // Same leaf name in both: the comparison CSV labels series by directory name.
    let (a, b) = (tmp.path().join("a/run"), tmp.path().join("b/run"));
    run_all(&a);
    run_all(&b);
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".qfwt") || n.ends_with(".qfag"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names.iter().filter(|n| fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok()).collect();
    outcome(
        names.len() >= 10 && differing.is_empty(),
        format!("{} CSV/checkpoint files compared, differing: {differing:?}", names.len()),
    )
}
