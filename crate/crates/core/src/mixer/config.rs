use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::KnotGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Tsmixer,
    TskanmixerV01,
    TskanmixerV02,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Tsmixer, Variant::TskanmixerV01, Variant::TskanmixerV02];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tsmixer => "tsmixer",
            Variant::TskanmixerV01 => "tskanmixer_v01",
            Variant::TskanmixerV02 => "tskanmixer_v02",
        }
    }

    pub fn uses_kan(self) -> bool {
        self != Variant::Tsmixer
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidValue {
                key: "variant".into(),
                reason: format!("unknown variant `{s}`"),
            })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    Mae,
}

/// Spline settings shared by every KAN in a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KanSettings {
    /// Hidden width of each two-depth KAN; `2·n_in + 1` when unset.
    pub dim: Option<usize>,
    pub grid: usize,
    pub k: usize,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
}

fn default_domain() -> (f64, f64) {
    KnotGrid::DEFAULT_DOMAIN
}

impl KanSettings {
    pub fn new(dim: Option<usize>, grid: usize, k: usize) -> Self {
        Self {
            dim,
            grid,
            k,
            domain: KnotGrid::DEFAULT_DOMAIN,
        }
    }

    pub fn knot_grid(&self) -> Result<KnotGrid> {
        KnotGrid::new(self.domain.0, self.domain.1, self.grid, self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Lookback length L.
    pub input_len: usize,
    /// Forecast horizon H.
    pub horizon: usize,
    /// Feature count C.
    pub features: usize,
    pub batch_size: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub kan: Option<KanSettings>,
    pub loss: LossKind,
    pub seed: u64,
}

fn positive(key: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidValue {
            key: key.into(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        positive("L", self.input_len)?;
        positive("H", self.horizon)?;
        positive("features", self.features)?;
        positive("batch", self.batch_size)?;
        positive("blocks", self.blocks)?;
        positive("hidden_size", self.hidden_size)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidValue {
                key: "dropout".into(),
                reason: format!("{} not in [0, 1)", self.dropout),
            });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidValue {
                key: "learning_rate".into(),
                reason: format!("{} must be positive", self.learning_rate),
            });
        }
        match (&self.kan, self.variant.uses_kan()) {
            (None, true) => return Err(Error::MissingKey("kan_grid".into())),
            (Some(_), false) => {
                return Err(Error::Config(
                    "KAN settings given for the tsmixer variant".into(),
                ))
            }
            (Some(kan), true) => {
                if let Some(dim) = kan.dim {
                    positive("kan_dim", dim)?;
                }
                positive("kan_grid", kan.grid)?;
                if kan.k == 0 {
                    return Err(Error::InvalidValue {
                        key: "kan_k".into(),
                        reason: "degree-0 splines have no usable derivative".into(),
                    });
                }
                kan.knot_grid()?;
            }
            (None, false) => {}
        }
        Ok(())
    }
}
