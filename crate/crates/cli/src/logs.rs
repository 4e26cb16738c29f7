//! CSV schemas: the episode log, the policy-evolution log and Pareto points.
//! Comma separated, header row, LF line endings, floats in shortest
//! round-trip form.

use std::fs::File;
use std::path::Path;

use mpq_core::env::EpisodeLog;
use mpq_core::pareto::ParetoPoint;
use mpq_core::QuantAssignment;

use crate::error::CliError;

pub const EPISODES_FILE: &str = "episodes.csv";
pub const POLICY_FILE: &str = "policy_evolution.csv";
pub const POINTS_FILE: &str = "pareto_points.csv";
pub const FRONTIER_FILE: &str = "pareto_frontier.csv";

pub fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().from_reader(file))
}

pub fn join_bits(bits: &[u32]) -> String {
    bits.iter().map(u32::to_string).collect::<Vec<_>>().join("-")
}

pub fn parse_bits(s: &str) -> Option<Vec<u32>> {
    s.split('-').map(|b| b.trim().parse().ok()).collect()
}

/// Streams episode logs to `episodes.csv` and `policy_evolution.csv`.
pub struct EpisodeWriter {
    episodes: csv::Writer<File>,
    policy: csv::Writer<File>,
    layers: usize,
    bitwidths: Vec<u32>,
}

impl EpisodeWriter {
    pub fn create(dir: &Path, layers: usize, bitwidths: &[u32]) -> Result<Self, CliError> {
        let mut episodes = writer(&dir.join(EPISODES_FILE))?;
        let mut policy = writer(&dir.join(POLICY_FILE))?;
        let mut head: Vec<String> =
            ["episode", "mean_reward", "terminal_reward", "quant", "acc", "diverged"].map(String::from).into();
        head.extend((0..layers).map(|l| format!("bits_{l}")));
        for l in 0..layers {
            head.extend(bitwidths.iter().map(|b| format!("p{l}_{b}")));
        }
        episodes.write_record(&head)?;
        let mut phead = vec!["episode".to_string(), "layer".to_string()];
        phead.extend(bitwidths.iter().map(|b| format!("p_{b}")));
        policy.write_record(&phead)?;
        Ok(Self { episodes, policy, layers, bitwidths: bitwidths.to_vec() })
    }

    pub fn write(&mut self, log: &EpisodeLog) -> Result<(), CliError> {
        if log.bits.len() != self.layers || log.probs.iter().any(|p| p.len() != self.bitwidths.len()) {
            return Err(CliError::Runtime(format!("episode {} log does not match the network shape", log.episode)));
        }
        let mut row = vec![
            log.episode.to_string(),
            log.mean_reward.to_string(),
            log.terminal_reward.to_string(),
            log.quant.to_string(),
            log.acc.to_string(),
            u8::from(log.diverged).to_string(),
        ];
        row.extend(log.bits.iter().map(u32::to_string));
        // A diverged episode may stop early; its missing layers log as empty.
        for l in 0..self.layers {
            match log.probs.get(l) {
                Some(p) => row.extend(p.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), self.bitwidths.len())),
            }
        }
        self.episodes.write_record(&row)?;
        for (l, p) in log.probs.iter().enumerate() {
            let mut prow = vec![log.episode.to_string(), l.to_string()];
            prow.extend(p.iter().map(f64::to_string));
            self.policy.write_record(&prow)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CliError> {
        self.episodes.flush()?;
        self.policy.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub terminal_reward: f64,
    pub quant: f64,
    pub acc: f64,
    pub diverged: bool,
    pub bits: Vec<u32>,
    /// `probs[layer][action]`; NaN where the episode did not reach the layer.
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTable {
    pub bitwidths: Vec<u32>,
    pub rows: Vec<EpisodeRow>,
}

fn row_error(path: &Path, row: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: malformed row {row}: {msg}", path.display()))
}

pub fn read_episodes(path: &Path) -> Result<EpisodeTable, CliError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::Runtime(format!("{}: bad header: {e}", path.display())))?.clone();
    let layers = header.iter().filter(|h| h.starts_with("bits_")).count();
    let bitwidths: Vec<u32> = header
        .iter()
        .filter_map(|h| h.strip_prefix("p0_"))
        .map(|b| b.parse())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Runtime(format!("{}: bad probability column: {e}", path.display())))?;
    if header.len() != 6 + layers + layers * bitwidths.len() || header.get(0) != Some("episode") {
        return Err(CliError::Runtime(format!("{}: unrecognized episode log header", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| row_error(path, row, e))?;
        let num = |k: usize| -> Result<f64, CliError> {
            rec[k].parse::<f64>().map_err(|e| row_error(path, row, format!("column {}: {e}", &header[k])))
        };
        let int = |k: usize| -> Result<u64, CliError> {
            rec[k].parse::<u64>().map_err(|e| row_error(path, row, format!("column {}: {e}", &header[k])))
        };
        let bits = (0..layers).map(|l| int(6 + l).map(|b| b as u32)).collect::<Result<Vec<_>, _>>()?;
        let mut probs = Vec::with_capacity(layers);
        for l in 0..layers {
            let base = 6 + layers + l * bitwidths.len();
            let p = (0..bitwidths.len())
                .map(|k| if rec[base + k].is_empty() { Ok(f64::NAN) } else { num(base + k) })
                .collect::<Result<Vec<_>, _>>()?;
            probs.push(p);
        }
        rows.push(EpisodeRow {
            episode: int(0)? as usize,
            mean_reward: num(1)?,
            terminal_reward: num(2)?,
            quant: num(3)?,
            acc: num(4)?,
            diverged: int(5)? != 0,
            bits,
            probs,
        });
    }
    Ok(EpisodeTable { bitwidths, rows })
}

pub fn write_points(path: &Path, points: &[ParetoPoint]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["assignment", "quant", "acc"])?;
    for p in points {
        w.write_record([join_bits(p.assignment.bits()), p.quant.to_string(), p.acc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<Vec<ParetoPoint>, CliError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::Runtime(format!("{}: bad header: {e}", path.display())))?;
    if header.iter().collect::<Vec<_>>() != ["assignment", "quant", "acc"] {
        return Err(CliError::Runtime(format!("{}: expected header assignment,quant,acc", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| row_error(path, row, e))?;
        let bits = parse_bits(&rec[0]).ok_or_else(|| row_error(path, row, format!("bad assignment {:?}", &rec[0])))?;
        let quant = rec[1].parse().map_err(|e| row_error(path, row, format!("column quant: {e}")))?;
        let acc = rec[2].parse().map_err(|e| row_error(path, row, format!("column acc: {e}")))?;
        out.push(ParetoPoint { assignment: QuantAssignment::new(bits), quant, acc });
    }
    Ok(out)
}
