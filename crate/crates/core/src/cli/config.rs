//! Run configuration: a TOML file layered over a built-in profile.
//!
//! ```toml
//! version = 1
//! profile = "desk"      # or "reference"; the preset the file is merged onto
//! seed = 7
//!
//! [dataset]
//! root = "desk_data"    # relative paths resolve against the file's directory
//! layout = "synthetic"
//! n_classes = 3
//!
//! [dataset.synthetic]
//! n_subjects = 10
//!
//! [model]
//! name = "reduced_test_net"
//!
//! [training]
//! learning_rate = 0.001
//!
//! [evaluation]
//! k = 5
//! ```
//!
//! Only keys that differ from the profile need to be given. The top-level
//! `seed` drives every random stream; `training.seed` and
//! `dataset.synthetic.seed` are overwritten with it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Layout, SyntheticConfig};
use crate::error::{Error, Result};
use crate::evaluation::ReportFormat;
use crate::facs::PSPI_LEVELS;
use crate::models::{ModelName, ModelSpec};
use crate::preprocess::PreprocessConfig;
use crate::training::TrainingConfig;

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_ENV: &str = "PAINPIPE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Published setup: 17 PSPI classes, ResNet-18 at 224 px, Adam 0.001,
    /// batch 256, 100 epochs, patience 20, 5 folds.
    #[default]
    Reference,
    /// CPU-sized setup on the bundled synthetic generator.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub root: PathBuf,
    pub layout: Layout,
    pub n_classes: usize,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub k: usize,
    /// Subject counts per fold; when omitted, validation and test take
    /// `N / k` subjects each and training the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_val: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    pub output_dir: PathBuf,
    pub formats: Vec<ReportFormat>,
    pub save_checkpoints: bool,
}

impl EvaluationSection {
    /// `(n_train, n_val, n_test)` for a dataset of `n_subjects`.
    pub fn fold_sizes(&self, n_subjects: usize) -> (usize, usize, usize) {
        let block = if self.k == 0 { 0 } else { n_subjects / self.k };
        let n_test = self.n_test.unwrap_or(block);
        let n_val = self.n_val.unwrap_or(n_test);
        let n_train = self
            .n_train
            .unwrap_or_else(|| n_subjects.saturating_sub(n_val + n_test));
        (n_train, n_val, n_test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub profile: Profile,
    pub seed: u64,
    pub dataset: DatasetSection,
    pub preprocess: PreprocessConfig,
    pub model: ModelSpec,
    pub training: TrainingConfig,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    pub fn preset(profile: Profile) -> Self {
        match profile {
            Profile::Reference => RunConfig {
                version: CONFIG_VERSION,
                profile,
                seed: 0,
                dataset: DatasetSection {
                    root: "data".into(),
                    layout: Layout::UnbcLike,
                    n_classes: PSPI_LEVELS,
                    synthetic: SyntheticConfig::default(),
                },
                preprocess: PreprocessConfig::default(),
                model: ModelSpec::new(ModelName::Resnet18, PSPI_LEVELS, 224),
                training: TrainingConfig::default(),
                evaluation: EvaluationSection {
                    k: 5,
                    n_train: None,
                    n_val: None,
                    n_test: None,
                    output_dir: "results".into(),
                    formats: vec![ReportFormat::Json, ReportFormat::Csv],
                    save_checkpoints: false,
                },
            },
            Profile::Desk => {
                let synthetic = SyntheticConfig::default();
                let n_classes = synthetic.n_classes();
                let size = synthetic.image_size;
                let reference = RunConfig::preset(Profile::Reference);
                RunConfig {
                    profile,
                    dataset: DatasetSection {
                        root: "desk_data".into(),
                        layout: Layout::Synthetic,
                        n_classes,
                        synthetic,
                    },
                    preprocess: PreprocessConfig {
                        target_size: size,
                        ..PreprocessConfig::default()
                    },
                    model: ModelSpec::new(ModelName::ReducedTestNet, n_classes, size).with_width(0.25),
                    training: TrainingConfig {
                        max_epochs: 12,
                        batch_size: 32,
                        early_stop_patience: 5,
                        ..TrainingConfig::default()
                    },
                    evaluation: EvaluationSection {
                        output_dir: "desk_results".into(),
                        ..reference.evaluation
                    },
                    ..reference
                }
            }
        }
    }

    /// Reads `path` (if any) over the selected profile. `profile` overrides
    /// the file's own `profile` key. Relative paths in the file resolve
    /// against its directory.
    pub fn load(path: Option<&Path>, profile: Option<Profile>) -> Result<Self> {
        let (table, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| Error::config(p.display().to_string(), e.to_string()))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (table, Some(dir))
            }
            None => (toml::Table::new(), None),
        };
        let profile = match profile {
            Some(p) => p,
            None => match table.get("profile") {
                Some(v) => v
                    .clone()
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::config("profile", e.to_string()))?,
                None => Profile::default(),
            },
        };
        let mut merged = toml::Table::try_from(RunConfig::preset(profile))
            .map_err(|e| Error::config("profile", e.to_string()))?;
        merge(&mut merged, table);
        merged.insert("profile".into(), toml::Value::try_from(profile).expect("enum serialises"));
        let mut cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.to_string().trim().to_string()))?;
        if let Some(dir) = base_dir {
            for p in [&mut cfg.dataset.root, &mut cfg.evaluation.output_dir] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies the seed to every component that consumes one.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.training.seed = seed;
        self.dataset.synthetic.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version),
            ));
        }
        if !(2..=PSPI_LEVELS).contains(&self.dataset.n_classes) {
            return Err(Error::config(
                "dataset.n_classes",
                format!("must lie in 2..={PSPI_LEVELS}, got {}", self.dataset.n_classes),
            ));
        }
        self.dataset.synthetic.validate()?;
        self.preprocess.validate()?;
        self.model.validate()?;
        if self.model.n_classes != self.dataset.n_classes {
            return Err(Error::config(
                "model.n_classes",
                format!("{} differs from dataset.n_classes {}", self.model.n_classes, self.dataset.n_classes),
            ));
        }
        if self.model.input_size != self.preprocess.target_size {
            return Err(Error::config(
                "model.input_size",
                format!(
                    "{} differs from preprocess.target_size {}",
                    self.model.input_size, self.preprocess.target_size
                ),
            ));
        }
        self.model.architecture()?;
        self.training.validate()?;
        if self.evaluation.k < 3 {
            return Err(Error::config("evaluation.k", format!("must be at least 3, got {}", self.evaluation.k)));
        }
        if self.evaluation.formats.is_empty() {
            return Err(Error::config("evaluation.formats", "needs at least one format"));
        }
        for (field, path) in [
            ("dataset.root", &self.dataset.root),
            ("evaluation.output_dir", &self.evaluation.output_dir),
        ] {
            let parent = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            if !parent.is_dir() {
                return Err(Error::config(
                    field,
                    format!("parent directory of {} does not exist", path.display()),
                ));
            }
        }
        Ok(())
    }

    /// Canonical JSON (sorted keys, no whitespace).
    pub fn canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string(&value)?)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Env,
    Config,
}

/// Seed precedence: command-line flag, then `PAINPIPE_SEED`, then the
/// config (whose profile supplies the default 0).
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<(u64, SeedSource)> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(v) = env {
        let s = v
            .trim()
            .parse()
            .map_err(|e| Error::config(SEED_ENV, format!("{v:?} is not an unsigned integer: {e}")))?;
        return Ok((s, SeedSource::Env));
    }
    Ok((config, SeedSource::Config))
}
