//! Self-describing JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_io::{DatasetSpec, RunConfig};
use crate::error::{Error, Result};
use crate::mixer::ForecastModel;

pub const FORMAT: &str = "tskanmixer-checkpoint";
pub const VERSION: u32 = 1;

/// Per-feature statistics used to standardize the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub run: RunConfig,
    pub dataset: DatasetSpec,
    pub scaling: Scaling,
    pub best_epoch: usize,
    pub model: ForecastModel,
}

impl Checkpoint {
    pub fn new(
        run: RunConfig,
        dataset: DatasetSpec,
        scaling: Scaling,
        best_epoch: usize,
        model: ForecastModel,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            run,
            dataset,
            scaling,
            best_epoch,
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                self.version
            )));
        }
        let c = self.model.config().features;
        if self.scaling.means.len() != c || self.scaling.stds.len() != c || self.dataset.features != c
        {
            return Err(Error::Checkpoint(format!(
                "feature count mismatch: model {c}, dataset {}, scaling {}",
                self.dataset.features,
                self.scaling.means.len()
            )));
        }
        self.model
            .validate()
            .map_err(|e| Error::Checkpoint(format!("invalid model: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
