use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use unlearn::data::{load_cifar10, make_synthetic, LabeledDataset};
use unlearn::eval::EnsembleConfig;
use unlearn::nn::{ArchitectureConfig, TrainConfig};
use unlearn::redaction::RedactionConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Directory holding the CIFAR-10 binary training batches.
    Cifar10 { path: PathBuf },
    Synthetic {
        class_count: usize,
        per_class: usize,
        image_shape: (usize, usize, usize),
        separation: f64,
        seed: u64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Cifar10 {
            path: PathBuf::from("cifar-10-batches-bin"),
        }
    }
}

impl DatasetSpec {
    /// Relative CIFAR paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<LabeledDataset> {
        Ok(match self {
            DatasetSpec::Cifar10 { path } => {
                let path = base.join(path);
                load_cifar10(&path).with_context(|| format!("loading CIFAR-10 from {}", path.display()))?
            }
            DatasetSpec::Synthetic {
                class_count,
                per_class,
                image_shape,
                separation,
                seed,
            } => make_synthetic(*class_count, *per_class, *image_shape, *separation, *seed)?,
        })
    }
}

/// Everything a command needs besides its own flags. Target training uses
/// `train` as given; every other seed derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub redaction: RedactionConfig,
    pub ensemble: EnsembleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            dataset: DatasetSpec::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            redaction: RedactionConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.train.optimizer.validate()?;
        self.redaction.validate()?;
        if self.train.batch_size == 0 {
            bail!("train.batch_size must be positive");
        }
        if let DatasetSpec::Synthetic {
            class_count,
            image_shape,
            ..
        } = &self.dataset
        {
            if *class_count != self.architecture.class_count || *image_shape != self.architecture.input_shape {
                bail!(
                    "synthetic dataset ({class_count} classes, {image_shape:?}) does not fit the architecture ({} classes, {:?})",
                    self.architecture.class_count,
                    self.architecture.input_shape
                );
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
