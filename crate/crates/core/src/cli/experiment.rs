use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Scaling};
use crate::data_io::{apply_split, load_csv, DatasetSpec, Registry, RunConfig};
use crate::error::{Error, Result};
use crate::mixer::ForecastModel;
use crate::params::Parameters;
use crate::training::{
    evaluate, persistence_metrics, standardize, train_with, Metrics, WindowedDataset,
};

/// Everything a training run reports, as written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub parameters: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub wall_seconds: f64,
    pub seconds_per_epoch: f64,
    pub valid: Metrics,
    pub test: Metrics,
    pub persistence_test: Metrics,
}

pub struct Prepared {
    pub spec: DatasetSpec,
    pub scaling: Scaling,
    pub data: WindowedDataset,
}

/// Loads, splits, standardizes and windows a CSV according to `spec`.
pub fn prepare(csv: &Path, spec: &DatasetSpec, input_len: usize, horizon: usize) -> Result<Prepared> {
    spec.validate()?;
    let raw = load_csv(csv, spec)?;
    let splits = apply_split(raw.len(), spec)?;
    let z = standardize(&raw.values, splits.train.clone())?;
    let data = WindowedDataset::new(&z.values, &splits, input_len, horizon, spec.context)?;
    Ok(Prepared {
        spec: spec.clone(),
        scaling: Scaling {
            means: z.means,
            stds: z.stds,
        },
        data,
    })
}

pub fn registry(extra: Option<&Path>) -> Result<Registry> {
    let reg = Registry::builtin();
    Ok(match extra {
        Some(path) => reg.merged(Registry::load(path)?),
        None => reg,
    })
}

/// Trains one configuration and writes `checkpoint.json`, `history.csv`
/// and `summary.json` into `out`.
pub fn run_experiment(
    run: &RunConfig,
    csv: &Path,
    registry: &Registry,
    out: &Path,
    verbose: bool,
) -> Result<RunSummary> {
    let (model_cfg, train_cfg, spec) = run.resolve(registry)?;
    let prepared = prepare(csv, &spec, model_cfg.input_len, model_cfg.horizon)?;
    let model = ForecastModel::new(model_cfg)?;
    let parameters = model.parameter_count();
    let (model, history) = train_with(model, &prepared.data, &train_cfg, |r| {
        if verbose {
            eprintln!(
                "epoch {:>4}  train {:.6}  valid {:.6}{}",
                r.epoch,
                r.train_loss,
                r.valid_loss,
                if r.improved { "  *" } else { "" }
            );
        }
    })?;
    let summary = RunSummary {
        dataset: spec.name.clone(),
        variant: run.variant.to_string(),
        seed: run.seed,
        parameters,
        epochs: history.epochs(),
        best_epoch: history.best_epoch,
        wall_seconds: history.wall_seconds,
        seconds_per_epoch: history.wall_seconds / history.epochs() as f64,
        valid: evaluate(&model, &prepared.data.valid)?,
        test: evaluate(&model, &prepared.data.test)?,
        persistence_test: persistence_metrics(&prepared.data.test)?,
    };

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ckpt = Checkpoint::new(
        run.clone(),
        prepared.spec,
        prepared.scaling,
        history.best_epoch,
        model,
    );
    ckpt.save(&out.join("checkpoint.json"))?;
    write(&out.join("history.csv"), history.to_csv())?;
    write(
        &out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

pub(crate) fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `base` joined with `p` unless `p` is absolute.
pub(crate) fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
