//! Plot-data bundles derived from episode logs.

use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::logs::{read_episodes, writer, EpisodeTable, EPISODES_FILE};

pub const REWARD_CURVE_FILE: &str = "reward_curve.csv";
pub const ACTION_PROBS_FILE: &str = "action_probabilities.csv";
pub const COMPARISON_FILE: &str = "reward_comparison.csv";
pub const MOVING_WINDOW: usize = 50;

/// Trailing mean over `window` values; `None` until a full window exists.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<Option<f64>> {
    assert!(window > 0);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= xs[i - window];
        }
        out.push((i + 1 >= window).then(|| sum / window as f64));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn curve_rows(t: &EpisodeTable) -> Vec<(usize, f64, f64, f64, Option<f64>)> {
    let terminal: Vec<f64> = t.rows.iter().map(|r| r.terminal_reward).collect();
    let ma = moving_average(&terminal, MOVING_WINDOW);
    t.rows.iter().zip(ma).map(|(r, m)| (r.episode, r.terminal_reward, r.mean_reward, r.acc, m)).collect()
}

fn write_curve(path: &Path, t: &EpisodeTable) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["episode", "terminal_reward", "mean_reward", "acc", "moving_average"])?;
    for (ep, term, mean, acc, ma) in curve_rows(t) {
        w.write_record([ep.to_string(), term.to_string(), mean.to_string(), acc.to_string(), opt(ma)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_action_probs(path: &Path, t: &EpisodeTable) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["episode", "layer", "bits", "probability"])?;
    for r in &t.rows {
        for (l, p) in r.probs.iter().enumerate() {
            for (b, &pb) in t.bitwidths.iter().zip(p) {
                if pb.is_finite() {
                    w.write_record([r.episode.to_string(), l.to_string(), b.to_string(), pb.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn series_name(dir: &Path, used: &[String]) -> String {
    let base = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let mut name = base.clone();
    let mut k = 2;
    while used.contains(&name) {
        name = format!("{base}#{k}");
        k += 1;
    }
    name
}

/// Writes per-run curves into each run directory and a comparison across all
/// runs into `out`. Returns the files written, relative to their directory.
pub fn write_reports(runs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if runs.is_empty() {
        return Err(CliError::Config("report: at least one run directory is required".into()));
    }
    let mut written = Vec::new();
    let mut tables = Vec::new();
    for dir in runs {
        let log = dir.join(EPISODES_FILE);
        if !log.is_file() {
            return Err(CliError::Runtime(format!("missing episode log {}", log.display())));
        }
        let t = read_episodes(&log)?;
        write_curve(&dir.join(REWARD_CURVE_FILE), &t)?;
        write_action_probs(&dir.join(ACTION_PROBS_FILE), &t)?;
        written.push(dir.join(REWARD_CURVE_FILE));
        written.push(dir.join(ACTION_PROBS_FILE));
        tables.push((dir, t));
    }
    std::fs::create_dir_all(out)?;
    let mut w = writer(&out.join(COMPARISON_FILE))?;
    w.write_record(["series", "episode", "terminal_reward", "acc", "moving_average"])?;
    let mut names = Vec::new();
    for (dir, t) in &tables {
        let name = series_name(dir, &names);
        for (ep, term, _, acc, ma) in curve_rows(t) {
            w.write_record([name.clone(), ep.to_string(), term.to_string(), acc.to_string(), opt(ma)])?;
        }
        names.push(name);
    }
    w.flush()?;
    written.push(out.join(COMPARISON_FILE));
    Ok(written)
}
