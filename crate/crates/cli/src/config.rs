//! Run configuration: a versioned TOML document with every default spelled
//! out in code. Unknown keys are rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use mpq_core::agent::{ActionMode, PpoConfig};
use mpq_core::env::{EnvConfig, RewardMode, RewardParams};
use mpq_core::nn::{LayerDef, NetworkSpec, SynthKind};
use mpq_core::pareto::DEFAULT_SPACE_CAP;
use mpq_core::{CostParams, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_bitwidths")]
    pub bitwidths: Vec<u32>,
    pub network: NetworkConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub enumerate: EnumerateSection,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_bitwidths() -> Vec<u32> {
    (2..=8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_network_name")]
    pub name: String,
    pub input_dims: Vec<usize>,
    pub layers: Vec<LayerDef>,
}

fn default_network_name() -> String {
    "network".into()
}

impl NetworkConfig {
    pub fn build(&self) -> Result<NetworkSpec, CliError> {
        NetworkSpec::build(self.name.clone(), &self.input_dims, &self.layers)
            .map_err(|e| CliError::Config(format!("network: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Generated data; the generator seed comes from the root seed unless set.
    Synthetic {
        generator: SynthKind,
        #[serde(default = "default_train_size")]
        train: usize,
        #[serde(default = "default_validation_size")]
        validation: usize,
        #[serde(default = "default_validation_size")]
        test: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// IDX files. The validation subsample is the tail of the training file.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_validation_size")]
        validation: usize,
        /// Use only the first N training items (before the validation split).
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

fn default_train_size() -> usize {
    4000
}

fn default_validation_size() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Full-precision training of the baseline.
    pub baseline: TrainConfig,
    /// Per-estimate finetune during search and enumeration.
    pub short: TrainConfig,
    /// Final retrain of the chosen assignment.
    pub long: TrainConfig,
    /// Training items seen by each short finetune (a prefix of the training
    /// split); the long retrain uses all of them.
    pub short_subsample: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            baseline: TrainConfig { learning_rate: 0.05, epochs: 30, ..TrainConfig::default() },
            short: TrainConfig { learning_rate: 0.01, epochs: 1, ..TrainConfig::default() },
            long: TrainConfig { learning_rate: 0.003, epochs: 40, ..TrainConfig::default() },
            short_subsample: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub action_mode: ActionMode,
    /// Unset: per-step rewards up to `per_step_max_layers` layers, deferred beyond.
    pub reward_mode: Option<RewardMode>,
    pub per_step_max_layers: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let env = EnvConfig::default();
        Self { action_mode: env.action_mode, reward_mode: env.reward_mode, per_step_max_layers: env.per_step_max_layers }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerateSection {
    /// Largest assignment space enumerated without subsampling.
    pub cap: u64,
}

impl Default for EnumerateSection {
    fn default() -> Self {
        Self { cap: DEFAULT_SPACE_CAP }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub action_mode: Option<ActionMode>,
    pub reward: Option<mpq_core::env::RewardFormulation>,
    pub clip_epsilon: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetConfig::Idx { train_images, train_labels, test_images, test_labels, .. } = &mut self.dataset {
            for p in [train_images, train_labels, test_images, test_labels] {
                fix(p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(m) = o.action_mode {
            self.search.action_mode = m;
        }
        if let Some(r) = o.reward {
            self.reward.formulation = r;
        }
        if let Some(e) = o.clip_epsilon {
            self.ppo.clip_epsilon = e;
        }
        self.validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            bitwidths: self.bitwidths.clone(),
            cost: self.cost.clone(),
            reward: self.reward,
            action_mode: self.search.action_mode,
            reward_mode: self.search.reward_mode,
            per_step_max_layers: self.search.per_step_max_layers,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, e: &dyn std::fmt::Display| CliError::Config(format!("{name}: {e}"));
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: unsupported version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(&b) = self.bitwidths.iter().find(|&&b| b < 2) {
            return Err(CliError::Config(format!("bitwidths: {b} is below the 2-bit minimum of the quantizer")));
        }
        self.cost.validate().map_err(|e| field("cost", &e))?;
        self.env_config().validate().map_err(|e| field("bitwidths/reward", &e))?;
        self.ppo.validate().map_err(|e| field("ppo", &e))?;
        for (name, t) in [("train.baseline", &self.train.baseline), ("train.short", &self.train.short), ("train.long", &self.train.long)] {
            t.validate().map_err(|e| field(name, &e))?;
        }
        if self.train.short_subsample == 0 {
            return Err(CliError::Config("train.short_subsample: must be >= 1".into()));
        }
        if self.train.long.epochs == 0 {
            return Err(CliError::Config("train.long.epochs: must be >= 1".into()));
        }
        self.network.build()?;
        match &self.dataset {
            DatasetConfig::Synthetic { train, validation, test, .. } => {
                if *train < 2 || *validation == 0 || *test == 0 {
                    return Err(CliError::Config(
                        "dataset: synthetic train needs >= 2 items and validation/test >= 1".into(),
                    ));
                }
            }
            DatasetConfig::Idx { train_images, train_labels, test_images, test_labels, validation, .. } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.is_file() {
                        return Err(CliError::Config(format!("dataset: path {} does not exist", p.display())));
                    }
                }
                if *validation == 0 {
                    return Err(CliError::Config("dataset.validation: must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}
