//! Experiment configuration: one JSON file addresses a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cited_core::extraction::{QueryConfig, RemovalKind};
use cited_core::{BoundaryConfig, Level, SbmConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    /// Path to a dataset JSON written by `gen-data`.
    File { path: PathBuf },
    Sbm(SbmConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub train: TrainConfig,
    /// Epochs of the post-signature fine-tune on the task labels.
    #[serde(default = "default_finetune_epochs")]
    pub finetune_epochs: usize,
}

fn default_hidden() -> usize {
    16
}

fn default_finetune_epochs() -> usize {
    50
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            train: TrainConfig::default(),
            finetune_epochs: default_finetune_epochs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default = "default_levels")]
    pub levels: Vec<Level>,
    pub query: QueryConfig,
    #[serde(default = "default_pool")]
    pub surrogates: usize,
    #[serde(default = "default_pool")]
    pub independents: usize,
    #[serde(default)]
    pub removal: RemovalKind,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub shift_sigma: f64,
    /// Hidden widths cycled through by label-level independents; empty means
    /// the target width.
    #[serde(default)]
    pub independent_dims: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_head_epochs")]
    pub head_epochs: usize,
}

fn default_levels() -> Vec<Level> {
    vec![Level::Emb, Level::Label]
}

fn default_pool() -> usize {
    5
}

fn default_temperature() -> f64 {
    1.0
}

fn default_head_epochs() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_thresholds")]
    pub thresholds: usize,
    #[serde(default)]
    pub use_sinkhorn: bool,
    #[serde(default = "default_sinkhorn_eps")]
    pub sinkhorn_eps: f64,
    #[serde(default = "default_sinkhorn_iters")]
    pub sinkhorn_iters: usize,
    /// Also score a uniformly random node set of the same size.
    #[serde(default = "default_true")]
    pub random_control: bool,
}

fn default_thresholds() -> usize {
    cited_core::verify::DEFAULT_THRESHOLDS
}

fn default_sinkhorn_eps() -> f64 {
    0.01
}

fn default_sinkhorn_iters() -> usize {
    2000
}

fn default_true() -> bool {
    true
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            use_sinkhorn: false,
            sinkhorn_eps: default_sinkhorn_eps(),
            sinkhorn_iters: default_sinkhorn_iters(),
            random_control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Perturbation ratio; `None` uses `1/(2L)` for each check.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    200
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            eta: None,
            trials: default_trials(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub signature: BoundaryConfig,
    pub attack: AttackSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads for pool training and bound trials; `None` uses the
    /// available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn field(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: path.to_string(),
        message: message.into(),
    }
}

fn check_train(path: &str, t: &TrainConfig) -> Result<(), CliError> {
    t.validate().map_err(|e| field(path, e.to_string()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingArtifact(path.to_path_buf()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| field("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section; errors name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        if let DatasetSource::Sbm(s) = &self.dataset {
            s.validate().map_err(|e| field("dataset", e.to_string()))?;
            if s.train_per_class + s.val_per_class > s.nodes_per_block {
                return Err(field("dataset.train_per_class", "train and validation exceed the block size"));
            }
        }
        if self.model.hidden == 0 {
            return Err(field("model.hidden", "must be positive"));
        }
        check_train("model.train", &self.model.train)?;
        self.signature.validate().map_err(|e| field("signature", e.to_string()))?;

        let a = &self.attack;
        if a.levels.is_empty() {
            return Err(field("attack.levels", "at least one level is required"));
        }
        if a.query.total == 0 {
            return Err(field("attack.query.total", "must be positive"));
        }
        if !(0.0..=1.0).contains(&a.query.boundary_fraction) {
            return Err(field("attack.query.boundary_fraction", "must lie in [0, 1]"));
        }
        if a.surrogates == 0 || a.independents == 0 {
            return Err(field("attack.surrogates", "both pools need at least one model"));
        }
        if !(a.temperature > 0.0) {
            return Err(field("attack.temperature", "must be positive"));
        }
        if !(a.shift_sigma >= 0.0) {
            return Err(field("attack.shift_sigma", "must be nonnegative"));
        }
        if a.independent_dims.contains(&0) {
            return Err(field("attack.independent_dims", "widths must be positive"));
        }
        check_train("attack.train", &a.train)?;

        if self.verify.thresholds == 0 {
            return Err(field("verify.thresholds", "must be positive"));
        }
        if !(self.verify.sinkhorn_eps > 0.0) {
            return Err(field("verify.sinkhorn_eps", "must be positive"));
        }
        if let Some(eta) = self.bounds.eta {
            if !(eta >= 0.0) {
                return Err(field("bounds.eta", "must be nonnegative"));
            }
        }
        if self.workers == Some(0) {
            return Err(field("workers", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"blocks": 3, "nodes_per_block": 60, "p_in": 0.3, "p_out": 0.02,
                    "feat_dim": 8, "class_mean_separation": 3.0, "feat_noise_sigma": 0.5},
        "attack": {"query": {"total": 60}}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.hidden, 16);
        assert_eq!(cfg.attack.surrogates, 5);
        assert_eq!(cfg.attack.query.boundary_fraction, 0.2);
        assert_eq!(cfg.verify.thresholds, 100);
        assert_eq!(cfg.bounds.trials, 200);
        assert!(matches!(cfg.dataset, DatasetSource::Sbm(_)));
    }

    #[test]
    fn file_source_parses() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"path": "d.json"}, "attack": {"query": {"total": 4}}}"#).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::File { path: "d.json".into() });
    }

    #[test]
    fn errors_name_the_field() {
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.attack.temperature = 0.0;
        match cfg.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "attack.temperature"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.model.train.lr = -1.0;
        match cfg.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "model.train"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
