use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_io::{load_run_config, Registry};
use crate::error::{Error, Result};
use crate::mixer::Variant;

use super::experiment::{resolve_path, run_experiment, write, RunSummary};

/// Relative improvement of `candidate` over `baseline` in percent; positive
/// means the candidate error is lower.
pub fn compute_delta_pct(baseline: f64, candidate: f64) -> f64 {
    100.0 * (baseline - candidate) / baseline
}

/// One suite entry. Relative paths are resolved against the suite file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    /// CSV file.
    pub dataset: PathBuf,
    pub variant: Variant,
    /// Run config; its `variant` is replaced by the entry's.
    pub config: PathBuf,
    pub seed: u64,
}

pub fn load_suite(path: &Path) -> Result<Vec<SuiteEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let suite: Vec<SuiteEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if suite.is_empty() {
        return Err(Error::Config(format!("{}: suite is empty", path.display())));
    }
    Ok(suite)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub variant: String,
    pub seed: u64,
    pub status: String,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub delta_mse_pct: Option<f64>,
    pub delta_mae_pct: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub wall_seconds: Option<f64>,
    pub seconds_per_epoch: Option<f64>,
    pub run_dir: String,
}

impl ReportRow {
    fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn row_from(summary: Option<&RunSummary>, dataset: String, entry: &SuiteEntry, status: String, dir: &Path) -> ReportRow {
    ReportRow {
        dataset,
        variant: entry.variant.to_string(),
        seed: entry.seed,
        status,
        mse: summary.map(|s| s.test.mse),
        mae: summary.map(|s| s.test.mae),
        delta_mse_pct: None,
        delta_mae_pct: None,
        best_epoch: summary.map(|s| s.best_epoch),
        epochs: summary.map(|s| s.epochs),
        wall_seconds: summary.map(|s| s.wall_seconds),
        seconds_per_epoch: summary.map(|s| s.seconds_per_epoch),
        run_dir: dir.display().to_string(),
    }
}

fn run_entry(entry: &SuiteEntry, base: &Path, registry: &Registry, dir: &Path, verbose: bool) -> (String, Result<RunSummary>) {
    let mut dataset = entry.dataset.display().to_string();
    let result = (|| {
        let mut run = load_run_config(&resolve_path(base, &entry.config))?;
        dataset = run.dataset.clone();
        run.variant = entry.variant;
        run.seed = entry.seed;
        if !run.variant.uses_kan() {
            run.kan_dim = None;
            run.kan_grid = None;
            run.kan_k = None;
        }
        run.validate()?;
        run_experiment(&run, &resolve_path(base, &entry.dataset), registry, dir, verbose)
    })();
    (dataset, result)
}

/// Runs every suite entry in order, recording failures instead of stopping,
/// then writes `report.csv` and `report.txt` into `out`.
pub fn run_suite(
    suite: &[SuiteEntry],
    base: &Path,
    registry: &Registry,
    out: &Path,
    verbose: bool,
) -> Result<Vec<ReportRow>> {
    if suite.is_empty() {
        return Err(Error::Config("suite is empty".into()));
    }
    let mut rows = Vec::with_capacity(suite.len());
    for (i, entry) in suite.iter().enumerate() {
        let stem = entry
            .dataset
            .file_stem()
            .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
        let dir = out.join("runs").join(format!("{i:03}_{stem}_{}_{}", entry.variant, entry.seed));
        if verbose {
            eprintln!("[{}/{}] {} {} seed {}", i + 1, suite.len(), entry.dataset.display(), entry.variant, entry.seed);
        }
        let (dataset, result) = run_entry(entry, base, registry, &dir, verbose);
        let row = match result {
            Ok(summary) => row_from(Some(&summary), dataset, entry, "ok".into(), &dir),
            Err(e) => {
                eprintln!("run {} failed: {e}", i + 1);
                row_from(None, dataset, entry, format!("failed: {e}"), &dir)
            }
        };
        rows.push(row);
    }
    fill_deltas(&mut rows);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("report.csv"), report_csv(&rows)?)?;
    write(&out.join("report.txt"), report_text(&rows))?;
    Ok(rows)
}

/// Deltas against the first successful tsmixer row of the same dataset.
pub fn fill_deltas(rows: &mut [ReportRow]) {
    let mut baselines: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok() && r.variant == Variant::Tsmixer.as_str()) {
        if let (Some(mse), Some(mae)) = (r.mse, r.mae) {
            baselines.entry(r.dataset.clone()).or_insert((mse, mae));
        }
    }
    for r in rows.iter_mut() {
        let base = baselines.get(&r.dataset);
        let ok = r.ok();
        r.delta_mse_pct = base.filter(|_| ok).zip(r.mse).map(|(b, m)| compute_delta_pct(b.0, m));
        r.delta_mae_pct = base.filter(|_| ok).zip(r.mae).map(|(b, m)| compute_delta_pct(b.1, m));
    }
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// 1 for the best value of a dataset, 2 or 3 for the runners-up.
fn ranks(rows: &[ReportRow], metric: impl Fn(&ReportRow) -> Option<f64>) -> Vec<Option<usize>> {
    let mut out = vec![None; rows.len()];
    let mut by_dataset: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if let Some(v) = metric(r).filter(|_| r.ok()) {
            by_dataset.entry(&r.dataset).or_default().push((v, i));
        }
    }
    for vals in by_dataset.values_mut() {
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (rank, &(_, i)) in vals.iter().take(3).enumerate() {
            out[i] = Some(rank + 1);
        }
    }
    out
}

fn marked(v: Option<f64>, rank: Option<usize>) -> String {
    match (v, rank) {
        (None, _) => "-".into(),
        (Some(v), Some(1)) => format!("{v:.3}**"),
        (Some(v), Some(_)) => format!("{v:.3}*"),
        (Some(v), None) => format!("{v:.3}"),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}%"))
}

pub fn report_text(rows: &[ReportRow]) -> String {
    let mse_rank = ranks(rows, |r| r.mse);
    let mae_rank = ranks(rows, |r| r.mae);
    let header = [
        "dataset", "variant", "seed", "MSE", "MAE", "dMSE", "dMAE", "best", "epochs", "s/epoch", "status",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                r.dataset.clone(),
                r.variant.clone(),
                r.seed.to_string(),
                marked(r.mse, mse_rank[i]),
                marked(r.mae, mae_rank[i]),
                pct(r.delta_mse_pct),
                pct(r.delta_mae_pct),
                r.best_epoch.map_or_else(|| "-".into(), |v| v.to_string()),
                r.epochs.map_or_else(|| "-".into(), |v| v.to_string()),
                r.seconds_per_epoch.map_or_else(|| "-".into(), |v| format!("{v:.2}")),
                if r.ok() { "ok".into() } else { "failed".into() },
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c > 0 {
                s.push_str("  ");
            }
            write!(s, "{cell:<w$}", w = widths[c]).unwrap();
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in &table {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out.push_str("\n** best per dataset, * top three. Deltas are relative to tsmixer on the same dataset.\n");
    out
}
