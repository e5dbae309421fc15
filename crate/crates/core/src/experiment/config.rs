use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::metrics::{DEFAULT_PATCH, DEFAULT_THRESHOLD};
use crate::models::{HeadMode, ModelConfig, Task};
use crate::synthdata::DatasetSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Ce,
    HetReg,
    HetCls,
}

impl LossKind {
    pub fn task(self) -> Task {
        match self {
            LossKind::Mse | LossKind::HetReg => Task::Reconstruction,
            LossKind::Ce | LossKind::HetCls => Task::Segmentation,
        }
    }

    pub fn head_mode(self) -> HeadMode {
        match self {
            LossKind::Mse | LossKind::Ce => HeadMode::Single,
            LossKind::HetReg | LossKind::HetCls => HeadMode::Dual,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Ce => "ce",
            LossKind::HetReg => "het_reg",
            LossKind::HetCls => "het_cls",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Directory holding (or receiving) `manifest.json` and the samples.
    pub dir: PathBuf,
    /// Generation parameters used by `generate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<DatasetSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub loss: LossKind,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Logit-noise samples per pixel for `het_cls`.
    #[serde(default = "defaults::mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Dice,
    Jaccard,
    Err,
    Hc,
    Mc,
    Psnr,
}

impl MetricKind {
    fn task(self) -> Task {
        match self {
            MetricKind::Psnr => Task::Reconstruction,
            _ => Task::Segmentation,
        }
    }

    pub fn for_task(task: Task) -> Vec<MetricKind> {
        match task {
            Task::Segmentation => vec![
                MetricKind::Dice,
                MetricKind::Jaccard,
                MetricKind::Err,
                MetricKind::Hc,
                MetricKind::Mc,
            ],
            Task::Reconstruction => vec![MetricKind::Psnr],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
    #[serde(default = "defaults::patch")]
    pub patch: usize,
    /// Empty means every metric that applies to the task.
    #[serde(default)]
    pub metrics: Vec<MetricKind>,
    /// Dropout passes used when model uncertainty is requested.
    #[serde(default = "defaults::mc_samples")]
    pub mc_dropout_samples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            threshold: defaults::threshold(),
            patch: defaults::patch(),
            metrics: Vec::new(),
            mc_dropout_samples: defaults::mc_samples(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self, task: Task) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(invalid_arg!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.patch == 0 {
            return Err(invalid_arg!("patch size must be positive"));
        }
        if let Some(m) = self.metrics.iter().find(|m| m.task() != task) {
            return Err(invalid_arg!("metric {m:?} does not apply to {task:?}"));
        }
        Ok(())
    }

    pub fn selected(&self, task: Task) -> Vec<MetricKind> {
        if self.metrics.is_empty() {
            MetricKind::for_task(task)
        } else {
            self.metrics.clone()
        }
    }
}

mod defaults {
    pub fn epochs() -> usize {
        30
    }
    pub fn batch_size() -> usize {
        8
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn mc_samples() -> usize {
        5
    }
    pub fn threshold() -> f64 {
        super::DEFAULT_THRESHOLD
    }
    pub fn patch() -> usize {
        super::DEFAULT_PATCH
    }
}

/// One experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    /// Rejects every loss / head / task mismatch.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let t = &self.training;
        let loss = t.loss.name();
        if t.loss.task() != self.model.task {
            return Err(invalid_arg!(
                "loss {loss} trains {:?} models but model.task is {:?}",
                t.loss.task(),
                self.model.task
            ));
        }
        if t.loss.head_mode() != self.model.head_mode {
            return Err(invalid_arg!(
                "loss {loss} requires head_mode {:?} but model.head_mode is {:?}",
                t.loss.head_mode(),
                self.model.head_mode
            ));
        }
        if t.batch_size == 0 {
            return Err(invalid_arg!("batch_size must be positive"));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(invalid_arg!("learning_rate must be positive, got {}", t.learning_rate));
        }
        if t.mc_samples == 0 {
            return Err(invalid_arg!("mc_samples must be positive"));
        }
        if let Some(spec) = &self.dataset.generate {
            spec.validate()?;
        }
        self.evaluation.validate(self.model.task)
    }

    /// Uses one seed for initialisation, batching and noise.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.training.seed = seed;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format("config", e.to_string().trim_end()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string().trim_end()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEG: &str = r#"
out_dir = "runs/du"

[dataset]
dir = "data"

[model]
task = "segmentation"
head_mode = "dual"

[training]
loss = "het_cls"
epochs = 2
seed = 4
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(SEG).unwrap();
        c.validate().unwrap();
        assert_eq!(c.training.batch_size, 8);
        assert_eq!(c.training.mc_samples, 5);
        assert_eq!(c.model.base_channels, 8);
        assert_eq!(c.evaluation.threshold, 0.5);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_mismatched_pairings() {
        for (loss, head, task) in [
            ("ce", "dual", "segmentation"),
            ("het_cls", "single", "segmentation"),
            ("mse", "single", "segmentation"),
            ("het_reg", "dual", "segmentation"),
            ("het_reg", "single", "reconstruction"),
            ("mse", "dual", "reconstruction"),
        ] {
            let text = SEG
                .replace("\"het_cls\"", &format!("\"{loss}\""))
                .replace("\"dual\"", &format!("\"{head}\""))
                .replace("\"segmentation\"", &format!("\"{task}\""));
            let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
            assert_eq!(err.class(), "invalid-argument", "{loss}/{head}/{task}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert_eq!(
            ExperimentConfig::from_toml(&format!("{SEG}\nbogus = 1\n")).unwrap_err().class(),
            "format"
        );
        let c = ExperimentConfig::from_toml(&SEG.replace("epochs = 2", "epochs = 2\nbatch_size = 0")).unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_toml(SEG).unwrap();
        c.evaluation.metrics = vec![MetricKind::Psnr];
        assert!(c.validate().is_err());
    }
}
