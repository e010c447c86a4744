use std::path::Path;

use hscls_core::abtest::{AbConfig, Metric, Statistic, DEFAULT_ALPHA, DEFAULT_K};
use hscls_core::corpus::{SplitConfig, UpsampleBasis, UpsampleConfig, UpsampleStrategy, DEFAULT_MAX_LEN};
use hscls_core::eval::DEFAULT_BETA;
use hscls_core::models::{Architecture, ArchitectureConfig, TrainConfig};
use hscls_core::nn::OptimizerSpec;
use hscls_core::rng;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::fsutil;
use crate::presets;

/// Name of the optional config file at the workspace root.
pub const CONFIG_FILE: &str = "hscls.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    Off,
    #[default]
    Mean,
    Median,
}

impl UpsampleMode {
    pub fn strategy(&self) -> Option<UpsampleStrategy> {
        match self {
            UpsampleMode::Off => None,
            UpsampleMode::Mean => Some(UpsampleStrategy::Mean),
            UpsampleMode::Median => Some(UpsampleStrategy::Median),
        }
    }
}

impl std::str::FromStr for UpsampleMode {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(UpsampleMode::Off),
            "mean" => Ok(UpsampleMode::Mean),
            "median" => Ok(UpsampleMode::Median),
            other => Err(PipelineError::Config(format!("upsample {other:?} (expected off, mean or median)"))),
        }
    }
}

/// Every knob a command or pipeline run depends on. The resolved value is
/// echoed into each run record and hashed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub max_len: usize,
    pub vocab_size: usize,
    pub min_assurance: u8,
    pub test_fraction: f64,
    /// Share of the training split held out for early stopping; 0 disables.
    pub validation_fraction: f64,
    pub upsample: UpsampleMode,
    pub minority_threshold: f64,
    /// Candidate architectures trained and compared by retraining runs.
    pub models: Vec<Architecture>,
    pub dnn_preset: String,
    pub text_cnn_preset: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub tune: bool,
    pub tune_budget: usize,
    pub tune_n_init: usize,
    pub tune_epochs: usize,
    pub ab_k: usize,
    pub ab_metric: Metric,
    pub ab_statistic: Statistic,
    pub ab_alpha: f64,
    pub ab_beta: f64,
    pub drift_threshold: f64,
    /// Batches smaller than this are measured but never raise an alert.
    pub drift_min_rows: usize,
    pub poll_interval_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            vocab_size: 20_000,
            min_assurance: 3,
            test_fraction: 0.05,
            validation_fraction: 0.1,
            upsample: UpsampleMode::Mean,
            minority_threshold: 0.01,
            models: vec![Architecture::Dnn, Architecture::TextCnn],
            dnn_preset: "paper_base".into(),
            text_cnn_preset: "prose_345".into(),
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 5,
            tune: false,
            tune_budget: 20,
            tune_n_init: 8,
            tune_epochs: 5,
            ab_k: DEFAULT_K,
            ab_metric: Metric::FBeta,
            ab_statistic: Statistic::Mean,
            ab_alpha: DEFAULT_ALPHA,
            ab_beta: DEFAULT_BETA,
            drift_threshold: 0.1,
            drift_min_rows: 0,
            poll_interval_ms: 500,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `hscls.toml` from `workspace` if present, else the defaults.
    pub fn load(workspace: &Path) -> Result<Self> {
        let path = workspace.join(CONFIG_FILE);
        if !path.is_file() {
            return Ok(Self::default());
        }
        let text = String::from_utf8(fsutil::read(&path)?)
            .map_err(|_| PipelineError::Config(format!("{} is not UTF-8", path.display())))?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        if self.vocab_size < 3 {
            return bad(format!("vocab_size {} must be at least 3", self.vocab_size));
        }
        if !(1..=4).contains(&self.min_assurance) {
            return bad(format!("min_assurance {} outside 1..=4", self.min_assurance));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction {} outside [0, 1)", self.validation_fraction));
        }
        if !(self.minority_threshold > 0.0 && self.minority_threshold < 1.0) {
            return bad(format!("minority_threshold {} outside (0, 1)", self.minority_threshold));
        }
        if self.models.is_empty() {
            return bad("models must list at least one architecture".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.tune && (self.tune_n_init < 2 || self.tune_budget < self.tune_n_init || self.tune_epochs == 0) {
            return bad(format!(
                "tuning needs 2 <= tune_n_init <= tune_budget and tune_epochs >= 1 (got {}, {}, {})",
                self.tune_n_init, self.tune_budget, self.tune_epochs
            ));
        }
        if self.ab_k < 2 {
            return bad(format!("ab_k {} must be at least 2", self.ab_k));
        }
        if !(self.ab_alpha > 0.0 && self.ab_alpha < 1.0) {
            return bad(format!("ab_alpha {} outside (0, 1)", self.ab_alpha));
        }
        if !(self.ab_beta >= 0.0 && self.ab_beta.is_finite()) {
            return bad(format!("ab_beta {} must be non-negative", self.ab_beta));
        }
        if !(self.drift_threshold >= 0.0) {
            return bad(format!("drift_threshold {} must be non-negative", self.drift_threshold));
        }
        for arch in &self.models {
            self.preset_config(*arch)?;
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        fsutil::config_hash(self)
    }

    pub fn preset_config(&self, arch: Architecture) -> Result<ArchitectureConfig> {
        let name = match arch {
            Architecture::Dnn => &self.dnn_preset,
            Architecture::TextCnn => &self.text_cnn_preset,
        };
        presets::preset(arch, name)
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig { test_fraction: self.test_fraction, seed: rng::derive_seed(self.seed, "split") }
    }

    pub fn validation_split(&self) -> Option<SplitConfig> {
        (self.validation_fraction > 0.0)
            .then(|| SplitConfig { test_fraction: self.validation_fraction, seed: rng::derive_seed(self.seed, "validation") })
    }

    pub fn upsample_config(&self) -> Option<UpsampleConfig> {
        self.upsample.strategy().map(|strategy| UpsampleConfig {
            minority_threshold: self.minority_threshold,
            strategy,
            basis: UpsampleBasis::MinorityClasses,
            seed: rng::derive_seed(self.seed, "upsample"),
        })
    }

    /// Training schedule for one architecture; the seed is split per model.
    pub fn train_config(&self, label: &str) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: OptimizerSpec::adam(self.learning_rate),
            seed: rng::derive_seed(self.seed, label),
            early_stop_patience: self.patience,
        }
    }

    pub fn ab_config(&self) -> AbConfig {
        AbConfig { metric: self.ab_metric, statistic: self.ab_statistic, alpha: self.ab_alpha, beta: self.ab_beta }
    }
}
