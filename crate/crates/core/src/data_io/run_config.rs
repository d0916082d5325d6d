use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{KanSettings, LossKind, ModelConfig, Variant};
use crate::training::TrainConfig;

use super::{DatasetSpec, Registry};

/// Every key a run config may contain.
pub const RUN_CONFIG_KEYS: [&str; 16] = [
    "dataset",
    "variant",
    "L",
    "H",
    "batch",
    "blocks",
    "dropout",
    "hidden_size",
    "learning_rate",
    "kan_dim",
    "kan_grid",
    "kan_k",
    "loss",
    "seed",
    "patience",
    "max_epochs",
];

const REQUIRED: [&str; 9] = [
    "dataset",
    "variant",
    "L",
    "H",
    "batch",
    "blocks",
    "dropout",
    "hidden_size",
    "learning_rate",
];

/// One experiment: model hyperparameters, training regime and the dataset
/// name to look up in a [`Registry`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: String,
    pub variant: Variant,
    #[serde(rename = "L")]
    pub input_len: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "batch")]
    pub batch_size: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub hidden_size: usize,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kan_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kan_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kan_k: Option<usize>,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_config(&text)
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let map = value
        .as_object()
        .ok_or_else(|| Error::Config("run config must be a JSON object".into()))?;
    if let Some(key) = map.keys().find(|k| !RUN_CONFIG_KEYS.contains(&k.as_str())) {
        return Err(Error::InvalidValue {
            key: key.clone(),
            reason: "unknown key".into(),
        });
    }
    if let Some(key) = REQUIRED.iter().find(|k| !map.contains_key(**k)) {
        return Err(Error::MissingKey((*key).into()));
    }
    let cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let kan_keys = [self.kan_dim, self.kan_grid, self.kan_k];
        if self.variant.uses_kan() {
            if self.kan_grid.is_none() {
                return Err(Error::MissingKey("kan_grid".into()));
            }
            if self.kan_k.is_none() {
                return Err(Error::MissingKey("kan_k".into()));
            }
        } else if kan_keys.iter().any(Option::is_some) {
            return Err(Error::Config(
                "kan_dim / kan_grid / kan_k are not used by the tsmixer variant".into(),
            ));
        }
        self.model_config(1)?.validate()?;
        for (key, v) in [("patience", self.patience), ("max_epochs", self.max_epochs)] {
            if v == Some(0) {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }

    pub fn model_config(&self, features: usize) -> Result<ModelConfig> {
        let kan = match (self.kan_grid, self.kan_k) {
            (Some(grid), Some(k)) => Some(KanSettings::new(self.kan_dim, grid, k)),
            _ => None,
        };
        let cfg = ModelConfig {
            variant: self.variant,
            input_len: self.input_len,
            horizon: self.horizon,
            features,
            batch_size: self.batch_size,
            blocks: self.blocks,
            dropout: self.dropout,
            hidden_size: self.hidden_size,
            learning_rate: self.learning_rate,
            kan,
            loss: self.loss,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Epoch budget and patience: explicit keys win over the dataset's
    /// default regime.
    pub fn train_config(&self, spec: &DatasetSpec) -> TrainConfig {
        let (epochs, patience) = spec.default_regime();
        TrainConfig {
            max_epochs: self.max_epochs.unwrap_or(epochs),
            patience: self.patience.unwrap_or(patience),
            loss: self.loss,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn resolve(&self, registry: &Registry) -> Result<(ModelConfig, TrainConfig, DatasetSpec)> {
        let spec = registry.get(&self.dataset)?.clone();
        Ok((
            self.model_config(spec.features)?,
            self.train_config(&spec),
            spec,
        ))
    }
}
