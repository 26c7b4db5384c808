use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AdamConfig, LossConfig, TrainError};
use crate::data::{read_manifest, CannyParams, DatasetManifest, DatasetSource, PairSpec, Task};
use crate::nn::NetworkSpec;

/// Turns a dataset reference into a manifest whose paths are absolute.
pub fn resolve_dataset(r: DatasetRef, base: &Path) -> Result<DatasetManifest, TrainError> {
    match r {
        DatasetRef::File(p) => {
            let p = if p.is_relative() { base.join(p) } else { p };
            if !p.is_file() {
                return Err(TrainError::Config(format!("dataset manifest {} does not exist", p.display())));
            }
            Ok(read_manifest(&p)?)
        }
        DatasetRef::Inline(m) => Ok(m.resolve_against(base)),
    }
}

/// Either an inline manifest or a path to a manifest JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Inline(DatasetManifest),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSettings {
    #[serde(default = "default_g_base")]
    pub base_channels: usize,
    #[serde(default = "default_blocks")]
    pub n_residual_blocks: usize,
}

fn default_g_base() -> usize {
    32
}
fn default_blocks() -> usize {
    8
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            base_channels: default_g_base(),
            n_residual_blocks: default_blocks(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSettings {
    #[serde(default = "default_d_base")]
    pub base_channels: usize,
    #[serde(default = "default_head")]
    pub head_width: usize,
}

fn default_d_base() -> usize {
    64
}
fn default_head() -> usize {
    128
}

impl Default for DiscriminatorSettings {
    fn default() -> Self {
        Self {
            base_channels: default_d_base(),
            head_width: default_head(),
        }
    }
}

/// Thresholds for classifying a finished run from its content-loss curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Fraction of the run averaged at each end of the curve.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Converged when `final ≤ ratio · initial`.
    #[serde(default = "default_converge")]
    pub converge_ratio: f64,
    /// Diverged when `final ≥ ratio · initial`.
    #[serde(default = "default_diverge")]
    pub diverge_ratio: f64,
}

fn default_window() -> f64 {
    0.1
}
fn default_converge() -> f64 {
    0.5
}
fn default_diverge() -> f64 {
    1.0
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            converge_ratio: default_converge(),
            diverge_ratio: default_diverge(),
        }
    }
}

/// Everything needed to reproduce one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    #[serde(default)]
    pub upscale_exponent: u32,
    pub dataset: DatasetRef,
    #[serde(default)]
    pub canny: CannyParams,
    #[serde(default)]
    pub generator: GeneratorSettings,
    #[serde(default)]
    pub discriminator: DiscriminatorSettings,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Network initialization seed.
    #[serde(default)]
    pub seed: u64,
    /// Shuffle seed; defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    pub output_dir: PathBuf,
}

fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    8
}

impl ExperimentConfig {
    /// Desk-scale defaults for `task` on `dataset`.
    pub fn new(name: &str, task: Task, upscale_exponent: u32, dataset: DatasetManifest, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            task,
            upscale_exponent,
            dataset: DatasetRef::Inline(dataset),
            canny: CannyParams::default(),
            generator: GeneratorSettings::default(),
            discriminator: DiscriminatorSettings::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            data_seed: None,
            convergence: ConvergenceConfig::default(),
            output_dir: output_dir.into(),
        }
    }

    /// Parses a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Makes relative paths absolute against `base`, inlines a referenced
    /// manifest and validates the result.
    pub fn resolve(mut self, base: &Path) -> Result<Self, TrainError> {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        self.dataset = DatasetRef::Inline(resolve_dataset(self.dataset, base)?);
        self.validate()?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn manifest(&self) -> Result<DatasetManifest, TrainError> {
        match &self.dataset {
            DatasetRef::Inline(m) => Ok(m.clone()),
            DatasetRef::File(p) => Ok(read_manifest(p)?),
        }
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn pair_spec(&self) -> PairSpec {
        PairSpec {
            task: self.task,
            upscale_exponent: self.upscale_exponent,
            canny: self.canny,
        }
    }

    pub fn generator_spec(&self, side: usize) -> NetworkSpec {
        let mut s = NetworkSpec::generator(self.generator.base_channels, self.upscale_exponent).with_side(side);
        s.n_residual_blocks = self.generator.n_residual_blocks;
        s.input_channels = self.task.input_channels();
        s
    }

    pub fn discriminator_spec(&self, side: usize) -> NetworkSpec {
        let mut s = NetworkSpec::discriminator(self.discriminator.base_channels).with_side(side);
        s.head_width = self.discriminator.head_width;
        s
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2 for batch normalization, got {}", self.batch_size));
        }
        self.loss.validate()?;
        self.optimizer.validate()?;
        let c = &self.convergence;
        if !(c.window > 0.0 && c.window <= 0.5 && c.converge_ratio > 0.0 && c.diverge_ratio >= c.converge_ratio) {
            return bad(format!("invalid convergence thresholds {c:?}"));
        }
        if let DatasetRef::Inline(m) = &self.dataset {
            m.validate()?;
            if let DatasetSource::Directory { root } = &m.source {
                if !root.is_dir() {
                    return bad(format!("dataset directory {} does not exist", root.display()));
                }
            }
            if m.train < self.batch_size {
                return bad(format!("{} training images cannot fill a batch of {}", m.train, self.batch_size));
            }
            self.pair_spec().validate(m.side)?;
            self.generator_spec(m.side).validate()?;
            self.discriminator_spec(m.side).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg = ExperimentConfig::new("r", Task::Sr, 2, DatasetManifest::synthetic(Family::Disks, 1), "out");
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let min: ExperimentConfig = serde_json::from_str(
            r#"{"name":"m","task":"sr","upscale_exponent":2,"output_dir":"o",
                "dataset":{"name":"d","source":{"kind":"synthetic","family":"blocks"}}}"#,
        )
        .unwrap();
        assert_eq!((min.epochs, min.batch_size, min.optimizer.lr), (10, 8, 1e-4));
        assert!(min.validate().is_ok());
    }

    #[test]
    fn rejects_bad_fields() {
        let mut cfg = ExperimentConfig::new("r", Task::Color, 1, DatasetManifest::synthetic(Family::Disks, 1), "o");
        assert!(cfg.validate().is_err());
        cfg.upscale_exponent = 0;
        assert!(cfg.validate().is_ok());
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
    }
}
