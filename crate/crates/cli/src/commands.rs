//! The five subcommands. Each writes into a run directory and updates its
//! manifest.

use std::fs;
use std::path::{Path, PathBuf};

use mpq_core::agent::save_agent;
use mpq_core::cost::{energy_estimate, speedup_estimate, state_of_quantization, SpeedupMode};
use mpq_core::env::{run_search, AccuracyModel, EnvError, FinetuneEstimator, MemoAccuracy};
use mpq_core::nn::{
    evaluate_accuracy, init_weights, load_weights, save_weights, train, NetworkSpec, NetworkWeights,
};
use mpq_core::pareto::{enumerate_space, pareto_frontier, validate_solution, ParetoPoint, ValidationReport};
use mpq_core::seed::SeedTree;
use mpq_core::QuantAssignment;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{load_splits, Splits};
use crate::error::CliError;
use crate::logs::{join_bits, read_points, write_points, EpisodeWriter, EPISODES_FILE, FRONTIER_FILE, POINTS_FILE, POLICY_FILE};
use crate::manifest::{unix_now, BaselineRecord, RunManifest};

pub const CONFIG_COPY: &str = "config.toml";
pub const BASELINE_WEIGHTS: &str = "baseline.qfwt";
pub const BASELINE_FILE: &str = "baseline.json";
pub const AGENT_FILE: &str = "agent.qfag";
pub const FINAL_WEIGHTS: &str = "final.qfwt";
pub const SEARCH_REPORT: &str = "search_report.json";
pub const VALIDATION_REPORT: &str = "validation_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    /// Network with full-precision accuracy and per-layer weight statistics.
    pub spec: NetworkSpec,
    pub full_precision_accuracy: f64,
    pub test_accuracy: f64,
    pub loss_curve: Vec<f64>,
    pub train_items: usize,
    pub validation_items: usize,
    pub test_items: usize,
}

/// The best assignment found by a search, in the columns of a deep
/// quantization results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub network: String,
    pub bits: Vec<u32>,
    pub assignment: String,
    pub average_bitwidth: f64,
    pub quant: f64,
    /// Short-finetune accuracy relative to full precision.
    pub relative_accuracy: f64,
    pub reward: f64,
    /// Episode that first produced the assignment; absent when nothing beat
    /// the uniform starting point.
    pub episode: Option<usize>,
    pub greedy_bits: Vec<u32>,
    pub full_precision_validation_accuracy: f64,
    pub full_precision_test_accuracy: f64,
    /// Test accuracy after the long retrain under `bits`.
    pub final_test_accuracy: f64,
    /// Full-precision minus final test accuracy, absolute.
    pub accuracy_loss: f64,
    pub speedup_compute: f64,
    pub speedup_full_cost: f64,
    pub energy_reduction: f64,
    pub episodes: usize,
    pub updates: usize,
    pub distinct_estimates: usize,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutput {
    #[serde(flatten)]
    pub report: ValidationReport,
    /// Where the solution's accuracy came from: the enumerated points or the
    /// search report.
    pub solution_source: String,
    pub verdict: String,
}

fn prepare_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("cannot create output dir {}: {e}", out.display())))?;
    fs::write(out.join(CONFIG_COPY), cfg.to_toml())?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, hint: &str) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("missing {} ({e}); {hint}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn finish(
    out: &Path,
    cfg: Option<&RunConfig>,
    command: &str,
    started: u64,
    files: &[&str],
    baseline: Option<BaselineRecord>,
) -> Result<(), CliError> {
    let mut m = RunManifest::load_or_new(out, cfg)?;
    if cfg.is_some() {
        m.record_files(out, &[CONFIG_COPY])?;
    }
    m.record_files(out, files)?;
    if baseline.is_some() {
        m.baseline = baseline;
    }
    m.record_command(command, cfg, started);
    m.save(out)
}

pub fn train_baseline(cfg: &RunConfig) -> Result<BaselineReport, CliError> {
    let started = unix_now();
    let mut spec = cfg.network.build()?;
    let splits = load_splits(cfg, &spec)?;
    let out = prepare_dir(cfg)?;
    let root = SeedTree::new(cfg.seed);
    let init = init_weights(&spec, &mut root.child("init").rng());
    let tcfg = mpq_core::TrainConfig { seed: root.child("baseline").seed(), ..cfg.train.baseline.clone() };
    let trained = train(&spec, &init, &splits.train, &tcfg, None)?;
    let fp = evaluate_accuracy(&spec, &trained.weights, &splits.validation, None)?;
    let test = evaluate_accuracy(&spec, &trained.weights, &splits.test, None)?;
    spec.full_precision_accuracy = Some(fp);
    spec.record_weight_stats(&trained.weights);
    save_weights(out.join(BASELINE_WEIGHTS), &trained.weights)?;
    let report = BaselineReport {
        spec,
        full_precision_accuracy: fp,
        test_accuracy: test,
        loss_curve: trained.loss_curve,
        train_items: splits.train.len(),
        validation_items: splits.validation.len(),
        test_items: splits.test.len(),
    };
    write_json(&out.join(BASELINE_FILE), &report)?;
    let record = BaselineRecord {
        full_precision_accuracy: fp,
        test_accuracy: test,
        validation_items: report.validation_items,
        test_items: report.test_items,
    };
    finish(&out, Some(cfg), "train-baseline", started, &[BASELINE_WEIGHTS, BASELINE_FILE], Some(record))?;
    Ok(report)
}

/// Baseline artifacts plus the data they were trained on.
pub struct Baseline {
    pub report: BaselineReport,
    pub weights: NetworkWeights,
    pub splits: Splits,
}

pub fn load_baseline(cfg: &RunConfig, out: &Path) -> Result<Baseline, CliError> {
    let hint = "run train-baseline first";
    let report: BaselineReport = read_json(&out.join(BASELINE_FILE), hint)?;
    let wpath = out.join(BASELINE_WEIGHTS);
    if !wpath.is_file() {
        return Err(CliError::Runtime(format!("missing baseline checkpoint {}; {hint}", wpath.display())));
    }
    let weights = load_weights(&wpath)?;
    let fresh = cfg.network.build()?;
    let same = fresh.input_dims == report.spec.input_dims
        && fresh.layers.len() == report.spec.layers.len()
        && fresh.layers.iter().zip(&report.spec.layers).all(|(a, b)| a.weight_shape() == b.weight_shape());
    if !same {
        return Err(CliError::Runtime(format!("{} was trained for a different network", wpath.display())));
    }
    report.spec.check_weights(&weights)?;
    let splits = load_splits(cfg, &report.spec)?;
    Ok(Baseline { report, weights, splits })
}

fn estimator(cfg: &RunConfig, b: &Baseline) -> Result<FinetuneEstimator, CliError> {
    Ok(FinetuneEstimator::new(
        b.report.spec.clone(),
        b.weights.clone(),
        b.splits.train.clone(),
        b.splits.validation.clone(),
        Some(b.splits.test.clone()),
        cfg.train.short.clone(),
        cfg.train.long.clone(),
        SeedTree::new(cfg.seed).child("finetune"),
    )?
    .with_short_subsample(cfg.train.short_subsample))
}

/// Search-time view of the estimator: memoized, with the long retrain left to
/// the caller so its weights can be kept.
struct SearchModel<'a>(&'a MemoAccuracy<FinetuneEstimator>);

impl AccuracyModel for SearchModel<'_> {
    fn accuracy(&self, a: &QuantAssignment) -> Result<f64, EnvError> {
        self.0.accuracy(a)
    }

    fn full_precision_accuracy(&self) -> f64 {
        self.0.full_precision_accuracy()
    }
}

pub fn search(cfg: &RunConfig) -> Result<SearchReport, CliError> {
    let started = unix_now();
    let out = cfg.output_dir.clone();
    let baseline = load_baseline(cfg, &out)?;
    prepare_dir(cfg)?;
    let spec = &baseline.report.spec;
    let memo = MemoAccuracy::new(estimator(cfg, &baseline)?);
    let env_cfg = cfg.env_config();
    let mut ppo = cfg.ppo.clone();
    ppo.seed = SeedTree::new(cfg.seed).child("agent").seed();
    let mut bitwidths = env_cfg.bitwidths.clone();
    bitwidths.sort_unstable();
    bitwidths.dedup();

    let mut logs = EpisodeWriter::create(&out, spec.num_layers(), &bitwidths)?;
    let mut sink_err = None;
    let mut observer = |log: &mpq_core::env::EpisodeLog| -> Result<(), EnvError> {
        if let Err(e) = logs.write(log) {
            sink_err = Some(e);
            return Err(EnvError::InvalidConfig("episode log write failed".into()));
        }
        Ok(())
    };
    let result = run_search(spec, &SearchModel(&memo), &env_cfg, &ppo, &mut observer);
    logs.flush()?;
    if let Some(e) = sink_err {
        return Err(e);
    }
    let result = result?;

    let best = &result.best.assignment;
    let (final_weights, final_acc) = memo.inner().long_retrain(best)?;
    save_weights(out.join(FINAL_WEIGHTS), &final_weights)?;
    save_agent(&out.join(AGENT_FILE), &result.agent)?;

    let report = SearchReport {
        network: spec.name.clone(),
        bits: best.bits().to_vec(),
        assignment: join_bits(best.bits()),
        average_bitwidth: best.average_bits(),
        quant: result.best.quant,
        relative_accuracy: result.best.acc,
        reward: result.best.reward,
        episode: result.best.episode,
        greedy_bits: result.greedy.bits().to_vec(),
        full_precision_validation_accuracy: baseline.report.full_precision_accuracy,
        full_precision_test_accuracy: baseline.report.test_accuracy,
        final_test_accuracy: final_acc,
        accuracy_loss: baseline.report.test_accuracy - final_acc,
        speedup_compute: speedup_estimate(spec, best, &cfg.cost, SpeedupMode::ComputeOnly)?,
        speedup_full_cost: speedup_estimate(spec, best, &cfg.cost, SpeedupMode::FullCost)?,
        energy_reduction: energy_estimate(spec, best, &cfg.cost)?,
        episodes: result.episodes.len(),
        updates: result.updates.len(),
        distinct_estimates: memo.cached(),
        elapsed_secs: result.elapsed_secs,
    };
    write_json(&out.join(SEARCH_REPORT), &report)?;
    finish(
        &out,
        Some(cfg),
        "search",
        started,
        &[EPISODES_FILE, POLICY_FILE, AGENT_FILE, FINAL_WEIGHTS, SEARCH_REPORT],
        None,
    )?;
    Ok(report)
}

pub struct EnumerateOutput {
    pub points: Vec<ParetoPoint>,
    pub frontier: Vec<ParetoPoint>,
}

pub fn enumerate(cfg: &RunConfig, jobs: usize) -> Result<EnumerateOutput, CliError> {
    let started = unix_now();
    let out = cfg.output_dir.clone();
    let baseline = load_baseline(cfg, &out)?;
    prepare_dir(cfg)?;
    let est = estimator(cfg, &baseline)?;
    let spec = &baseline.report.spec;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let points = pool.install(|| enumerate_space(spec, &cfg.cost, &cfg.bitwidths, &est, cfg.enumerate.cap))?;
    let frontier = pareto_frontier(&points)?;
    write_points(&out.join(POINTS_FILE), &points)?;
    write_points(&out.join(FRONTIER_FILE), &frontier)?;
    finish(&out, Some(cfg), "enumerate", started, &[POINTS_FILE, FRONTIER_FILE], None)?;
    Ok(EnumerateOutput { points, frontier })
}

pub struct ValidateArgs {
    pub points: PathBuf,
    pub solution: PathBuf,
    pub eps_quant: f64,
    pub eps_acc: f64,
    /// Where the report and manifest go.
    pub out: PathBuf,
}

/// Checks the searched solution against the enumerated frontier. The report is
/// written either way; FAIL comes back as `CliError::ValidationFailed`.
pub fn validate(args: &ValidateArgs, cfg: Option<&RunConfig>) -> Result<ValidationOutput, CliError> {
    let started = unix_now();
    for (eps, name) in [(args.eps_quant, "--eps-quant"), (args.eps_acc, "--eps-acc")] {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(CliError::Config(format!("{name} must be a nonnegative number, got {eps}")));
        }
    }
    let hint = "run search first";
    let report: SearchReport = read_json(&args.solution, hint)?;
    if !args.points.is_file() {
        return Err(CliError::Runtime(format!("missing {}; run enumerate first", args.points.display())));
    }
    let points = read_points(&args.points)?;
    let frontier = pareto_frontier(&points)?;
    let (solution, source) = match points.iter().find(|p| p.assignment.bits() == report.bits.as_slice()) {
        Some(p) => (p.clone(), "enumerated points".to_string()),
        None => {
            let assignment = QuantAssignment::new(report.bits.clone());
            let quant = match cfg {
                Some(c) => state_of_quantization(&c.network.build()?, &assignment, &c.cost)?,
                None => report.quant,
            };
            (ParetoPoint { assignment, quant, acc: report.relative_accuracy }, "search report".to_string())
        }
    };
    let v = validate_solution(&solution, &frontier, args.eps_quant, args.eps_acc)?;
    let output = ValidationOutput {
        verdict: if v.pass { "PASS" } else { "FAIL" }.into(),
        report: v,
        solution_source: source,
    };
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join(VALIDATION_REPORT), &output)?;
    finish(&args.out, None, "validate", started, &[VALIDATION_REPORT], None)?;
    if !output.report.pass {
        return Err(CliError::ValidationFailed(format!(
            "{} (quant {}, acc {}) is not within eps of the frontier; nearest {} (quant {}, acc {})",
            join_bits(output.report.solution.assignment.bits()),
            output.report.solution.quant,
            output.report.solution.acc,
            join_bits(output.report.nearest.assignment.bits()),
            output.report.nearest.quant,
            output.report.nearest.acc,
        )));
    }
    Ok(output)
}

pub fn report(runs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let started = unix_now();
    let written = crate::report::write_reports(runs, out)?;
    let mut dirs: Vec<&Path> = Vec::new();
    for dir in runs.iter().map(PathBuf::as_path).chain([out]) {
        if !dirs.contains(&dir) {
            dirs.push(dir);
        }
    }
    for dir in dirs {
        let names: Vec<String> = written
            .iter()
            .filter(|p| p.parent() == Some(dir))
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        if names.is_empty() {
            continue;
        }
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        finish(dir, None, "report", started, &refs, None)?;
    }
    Ok(written)
}
