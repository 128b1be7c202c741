//! TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trafficmetric::eval::EvalConfig;
use trafficmetric::losses::{LossWeights, MarginParams};
use trafficmetric::mining::NegativeStrategy;
use trafficmetric::nn::{LrSchedule, NetworkConfig, TrainConfig};
use trafficmetric::synthgen::GeneratorConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSection {
    pub strategy: NegativeStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            lr_schedule: t.lr_schedule,
            seed: t.seed,
        }
    }
}

/// Every knob of one pipeline run. A top-level `seed` overrides the seeds of
/// the generator, network and training sections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub generator: GeneratorConfig,
    pub network: NetworkConfig,
    pub margins: MarginParams,
    pub weights: LossWeights,
    pub mining: MiningSection,
    pub training: TrainingSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Loads `path` or falls back to the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Applies the global seed and strategy overrides, then validates.
    pub fn resolve(mut self, seed: Option<u64>, strategy: Option<NegativeStrategy>) -> Result<Self, CliError> {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.generator.seed = s;
            self.network.seed = s.wrapping_add(1);
            self.training.seed = s.wrapping_add(2);
        }
        if let Some(s) = strategy {
            self.mining.strategy = s;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: String| CliError::Config(e);
        self.generator.validate().map_err(|e| cfg(e.to_string()))?;
        self.network.validate().map_err(|e| cfg(e.to_string()))?;
        self.margins.validate().map_err(|e| cfg(e.to_string()))?;
        self.weights.validate().map_err(|e| cfg(e.to_string()))?;
        if self.network.image_size != self.generator.image_size {
            return Err(cfg(format!(
                "network.image_size {} differs from generator.image_size {}",
                self.network.image_size, self.generator.image_size
            )));
        }
        if !(self.training.lr.is_finite() && self.training.lr > 0.0) {
            return Err(cfg(format!("training.lr {} must be positive", self.training.lr)));
        }
        if self.eval.levels.is_empty() {
            return Err(cfg("eval.levels is empty".into()));
        }
        if self.eval.k_neighbors == 0 {
            return Err(cfg("eval.k_neighbors must be at least 1".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            lr: self.training.lr,
            lr_schedule: self.training.lr_schedule,
            strategy: self.mining.strategy,
            seed: self.training.seed,
            margins: self.margins,
            weights: self.weights,
        }
    }
}
