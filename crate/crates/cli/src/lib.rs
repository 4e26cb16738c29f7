//! Command-line runner: baseline training, bitwidth search, exhaustive
//! enumeration, Pareto validation and plot-data reports.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod logs;
pub mod manifest;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use mpq_core::agent::ActionMode;
use mpq_core::env::RewardFormulation;

use crate::commands::{ValidateArgs, SEARCH_REPORT};
use crate::config::{Overrides, RunConfig};
pub use crate::error::CliError;
use crate::logs::POINTS_FILE;

#[derive(Debug, Parser)]
#[command(name = "mpq", version, about = "Per-layer mixed-precision quantization search")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for enumeration.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub action_mode: Option<ActionModeArg>,
    #[arg(long, global = true, value_enum)]
    pub reward: Option<RewardArg>,
    #[arg(long, global = true)]
    pub clip_epsilon: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActionModeArg {
    Flexible,
    Restricted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewardArg {
    Shaped,
    Ratio,
    Difference,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the full-precision network and record its accuracy.
    TrainBaseline,
    /// Run the PPO bitwidth search from the baseline.
    Search,
    /// Score every assignment and extract the Pareto frontier.
    Enumerate,
    /// Check a searched solution against the enumerated frontier.
    Validate {
        #[arg(long, default_value_t = 0.05)]
        eps_quant: f64,
        #[arg(long, default_value_t = 0.005)]
        eps_acc: f64,
        /// Points CSV; defaults to the output directory's.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Search report; defaults to the output directory's.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Emit plot data from one or more run directories.
    Report {
        /// Run directories; the comparison goes to --out or the first one.
        runs: Vec<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
            action_mode: self.action_mode.map(|m| match m {
                ActionModeArg::Flexible => ActionMode::Flexible,
                ActionModeArg::Restricted => ActionMode::Restricted,
            }),
            reward: self.reward.map(|r| match r {
                RewardArg::Shaped => RewardFormulation::Shaped,
                RewardArg::Ratio => RewardFormulation::Ratio,
                RewardArg::Difference => RewardFormulation::Difference,
            }),
            clip_epsilon: self.clip_epsilon,
        }
    }

    fn load_config(&self) -> Result<Option<RunConfig>, CliError> {
        let Some(path) = &self.config else { return Ok(None) };
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&self.overrides())?;
        Ok(Some(cfg))
    }

    fn require_config(&self) -> Result<RunConfig, CliError> {
        self.load_config()?.ok_or_else(|| CliError::Config("--config is required for this command".into()))
    }
}

/// Parses arguments and runs one command. Help and version requests print and
/// succeed.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string().trim_end().to_string())),
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::TrainBaseline => {
            let cfg = cli.require_config()?;
            let r = commands::train_baseline(&cfg)?;
            println!(
                "baseline: validation accuracy {:.4}, test accuracy {:.4} -> {}",
                r.full_precision_accuracy,
                r.test_accuracy,
                cfg.output_dir.display()
            );
        }
        Command::Search => {
            let cfg = cli.require_config()?;
            let r = commands::search(&cfg)?;
            println!(
                "search: bits {} (avg {:.2}), quant {:.4}, rel acc {:.4}, final test acc {:.4}, loss {:.4}, speedup {:.2}x",
                r.assignment,
                r.average_bitwidth,
                r.quant,
                r.relative_accuracy,
                r.final_test_accuracy,
                r.accuracy_loss,
                r.speedup_compute
            );
        }
        Command::Enumerate => {
            let cfg = cli.require_config()?;
            let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let r = commands::enumerate(&cfg, jobs)?;
            println!("enumerate: {} points, {} on the frontier", r.points.len(), r.frontier.len());
        }
        Command::Validate { eps_quant, eps_acc, points, solution } => {
            let cfg = cli.load_config()?;
            let out = match (&cli.out, &cfg) {
                (Some(o), _) => o.clone(),
                (None, Some(c)) => c.output_dir.clone(),
                (None, None) => PathBuf::from("."),
            };
            let args = ValidateArgs {
                points: points.clone().unwrap_or_else(|| out.join(POINTS_FILE)),
                solution: solution.clone().unwrap_or_else(|| out.join(SEARCH_REPORT)),
                eps_quant: *eps_quant,
                eps_acc: *eps_acc,
                out,
            };
            let v = commands::validate(&args, cfg.as_ref())?;
            println!(
                "validate: PASS ({} quant {:.4} acc {:.4})",
                logs::join_bits(v.report.solution.assignment.bits()),
                v.report.solution.quant,
                v.report.solution.acc
            );
        }
        Command::Report { runs } => {
            let cfg = cli.load_config()?;
            let runs = if runs.is_empty() {
                vec![cli.out.clone().or(cfg.map(|c| c.output_dir)).ok_or_else(|| {
                    CliError::Config("report: give run directories, --out or --config".into())
                })?]
            } else {
                runs.clone()
            };
            let out = cli.out.clone().unwrap_or_else(|| runs[0].clone());
            let written = commands::report(&runs, &out)?;
            println!("report: wrote {} files", written.len());
        }
    }
    Ok(())
}
