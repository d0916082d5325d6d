//! CSV ingestion, the dataset registry with split rules, and run configs.

mod csv_io;
mod run_config;

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, read_csv, write_csv, RawSeries};
pub use run_config::{load_run_config, parse_run_config, RunConfig, RUN_CONFIG_KEYS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[serde(rename = "15min")]
    Minutes15,
    Hourly,
    Daily,
    Weekly,
    Monthly,
}

impl Granularity {
    /// Rows in one 30-day month, where that is meaningful.
    pub fn rows_per_month(self) -> Option<usize> {
        match self {
            Granularity::Minutes15 => Some(30 * 24 * 4),
            Granularity::Hourly => Some(30 * 24),
            Granularity::Daily => Some(30),
            Granularity::Monthly => Some(1),
            Granularity::Weekly => None,
        }
    }
}

/// Train / valid / test portions, counted in months or in rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Months([usize; 3]),
    Rows([usize; 3]),
}

impl SplitRule {
    pub fn is_months(&self) -> bool {
        matches!(self, SplitRule::Months(_))
    }
}

/// How much history a window may draw from before its own split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowContext {
    /// Inputs and targets both stay inside the split.
    #[default]
    Isolated,
    /// Targets stay inside the split; inputs may reach back up to `L` rows
    /// into earlier splits, never forward.
    Preceding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub features: usize,
    /// Expected row count; a mismatch with the file only warns.
    #[serde(default)]
    pub time_steps: Option<usize>,
    pub granularity: Granularity,
    pub split: SplitRule,
    #[serde(default)]
    pub context: WindowContext,
}

/// Contiguous, ordered, non-overlapping row ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(Error::InvalidValue {
                key: "features".into(),
                reason: format!("dataset `{}` declares no features", self.name),
            });
        }
        self.split_rows().map(|_| ())
    }

    /// Split sizes in rows.
    pub fn split_rows(&self) -> Result<[usize; 3]> {
        let rows = match self.split {
            SplitRule::Rows(r) => r,
            SplitRule::Months(m) => {
                let per = self.granularity.rows_per_month().ok_or_else(|| {
                    Error::Config(format!(
                        "dataset `{}`: month split needs a sub-monthly or monthly granularity",
                        self.name
                    ))
                })?;
                m.map(|v| v * per)
            }
        };
        if rows.contains(&0) {
            return Err(Error::InvalidValue {
                key: "split".into(),
                reason: format!("dataset `{}` has an empty split {rows:?}", self.name),
            });
        }
        Ok(rows)
    }

    /// Default `(max_epochs, patience)`: month-split datasets use the long
    /// regime, row-split datasets the short one.
    pub fn default_regime(&self) -> (usize, usize) {
        if self.split.is_months() {
            crate::training::TrainConfig::PROPER
        } else {
            crate::training::TrainConfig::STRICT
        }
    }
}

/// Resolves `spec` against a series of `total_rows` rows. Rows left over
/// after the test split stay unused.
pub fn apply_split(total_rows: usize, spec: &DatasetSpec) -> Result<SplitRanges> {
    let [tr, va, te] = spec.split_rows()?;
    let needed = tr + va + te;
    if needed > total_rows {
        return Err(Error::SplitOverflow {
            rule: format!("{:?}", spec.split),
            needed,
            available: total_rows,
        });
    }
    Ok(SplitRanges {
        train: 0..tr,
        valid: tr..tr + va,
        test: tr + va..needed,
    })
}

/// Known datasets by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub datasets: Vec<DatasetSpec>,
}

fn builtin(
    name: &str,
    features: usize,
    time_steps: usize,
    granularity: Granularity,
    split: SplitRule,
    context: WindowContext,
) -> DatasetSpec {
    DatasetSpec {
        name: name.into(),
        features,
        time_steps: Some(time_steps),
        granularity,
        split,
        context,
    }
}

impl Registry {
    /// The standard benchmark datasets.
    pub fn builtin() -> Self {
        use Granularity::*;
        use SplitRule::{Months, Rows};
        use WindowContext::{Isolated, Preceding};
        let ett_h = |n| builtin(n, 7, 17_420, Hourly, Months([12, 4, 4]), Isolated);
        let ett_m = |n| builtin(n, 7, 69_680, Minutes15, Months([12, 4, 4]), Isolated);
        Self {
            datasets: vec![
                ett_h("ETTh1"),
                ett_h("ETTh2"),
                ett_m("ETTm1"),
                ett_m("ETTm2"),
                builtin("NN5_daily", 111, 791, Daily, Rows([672, 59, 59]), Preceding),
                builtin("NN5_weekly", 111, 113, Weekly, Rows([96, 8, 8]), Preceding),
                builtin("CIF_2016", 48, 120, Monthly, Rows([96, 12, 12]), Preceding),
                builtin("Hospital", 767, 84, Monthly, Rows([58, 12, 12]), Preceding),
                builtin("Exchange", 8, 7_588, Daily, Rows([6829, 379, 379]), Isolated),
                builtin("FRED_MD", 107, 728, Monthly, Rows([698, 14, 14]), Preceding),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let reg: Registry = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("registry: {e}")))?;
        for spec in &reg.datasets {
            spec.validate()?;
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Built-in entries, overridden or extended by `other`.
    pub fn merged(mut self, other: Registry) -> Self {
        for spec in other.datasets {
            match self.datasets.iter_mut().find(|d| d.name == spec.name) {
                Some(slot) => *slot = spec,
                None => self.datasets.push(spec),
            }
        }
        self
    }

    pub fn get(&self, name: &str) -> Result<&DatasetSpec> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::InvalidValue {
                key: "dataset".into(),
                reason: format!("`{name}` is not in the dataset registry"),
            })
    }
}
