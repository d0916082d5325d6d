//! Command-line front end.

mod benchmark;
mod experiment;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::data_io::{apply_split, load_csv, load_run_config};
use crate::error::{Error, Result};
use crate::mixer::{ForecastModel, KanSettings, LossKind, ModelConfig, Variant};
use crate::tensor::Tensor;
use crate::training::{evaluate, gradient_check, WindowedDataset};

pub use benchmark::{
    compute_delta_pct, fill_deltas, load_suite, report_csv, report_text, run_suite, ReportRow,
    SuiteEntry,
};
pub use experiment::{prepare, registry, run_experiment, Prepared, RunSummary};

/// Overrides the default output directory (`runs`).
pub const OUT_DIR_ENV: &str = "TSKANMIXER_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "tskanmixer", version, about = "TSMixer and KAN-augmented TSMixer forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration on one CSV file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a CSV file and print MSE / MAE as JSON.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on a toy model.
    Gradcheck(GradcheckArgs),
    /// Run a suite of experiments and write a comparison report.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, env = OUT_DIR_ENV, default_value = "runs")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra dataset registry (JSON) merged over the built-in one.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long = "L", default_value_t = 8)]
    pub input_len: usize,
    #[arg(long = "H", default_value_t = 4)]
    pub horizon: usize,
    #[arg(long, default_value_t = 3)]
    pub features: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 6)]
    pub hidden_size: usize,
    #[arg(long, default_value_t = 5)]
    pub kan_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub kan_grid: usize,
    #[arg(long, default_value_t = 2)]
    pub kan_k: usize,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, env = OUT_DIR_ENV, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long, short)]
    pub quiet: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Benchmark(a) => bench(a),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn train(a: TrainArgs) -> Result<i32> {
    let mut run = load_run_config(&a.config)?;
    if let Some(seed) = a.seed {
        run.seed = seed;
    }
    let reg = registry(a.registry.as_deref())?;
    let summary = run_experiment(&run, &a.data, &reg, &a.out, !a.quiet)?;
    print_json(&summary)?;
    Ok(0)
}

#[derive(Serialize)]
struct EvalOutput {
    split: SplitName,
    samples: usize,
    mse: f64,
    mae: f64,
}

/// Windows of `csv` scaled with the checkpoint's training statistics.
pub fn checkpoint_windows(ckpt: &Checkpoint, csv: &Path) -> Result<WindowedDataset> {
    let spec = &ckpt.dataset;
    let raw = load_csv(csv, spec)?;
    let splits = apply_split(raw.len(), spec)?;
    let c = raw.features();
    let (means, stds) = (&ckpt.scaling.means, &ckpt.scaling.stds);
    let scaled = Tensor::from_fn(raw.values.shape(), |i| {
        (raw.values.data()[i] - means[i % c]) / stds[i % c]
    });
    let cfg = ckpt.model.config();
    WindowedDataset::new(&scaled, &splits, cfg.input_len, cfg.horizon, spec.context)
}

fn eval(a: EvalArgs) -> Result<i32> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let data = checkpoint_windows(&ckpt, &a.data)?;
    let windows = match a.split {
        SplitName::Train => &data.train,
        SplitName::Valid => &data.valid,
        SplitName::Test => &data.test,
    };
    let m = evaluate(&ckpt.model, windows)?;
    print_json(&EvalOutput {
        split: a.split,
        samples: windows.len(),
        mse: m.mse,
        mae: m.mae,
    })?;
    Ok(0)
}

#[derive(Serialize)]
struct GradcheckOutput {
    variant: Variant,
    max_relative_error: f64,
    threshold: f64,
    worst_parameter: String,
    checked: usize,
    total: usize,
    passed: bool,
}

fn gradcheck(a: GradcheckArgs) -> Result<i32> {
    let cfg = ModelConfig {
        variant: a.variant,
        input_len: a.input_len,
        horizon: a.horizon,
        features: a.features,
        batch_size: a.batch,
        blocks: a.blocks,
        dropout: a.dropout,
        hidden_size: a.hidden_size,
        learning_rate: 1e-3,
        kan: a
            .variant
            .uses_kan()
            .then(|| KanSettings::new(Some(a.kan_dim), a.kan_grid, a.kan_k)),
        loss: LossKind::Mse,
        seed: a.seed,
    };
    let model = ForecastModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(1));
    let x = Tensor::from_fn(&[a.batch, a.input_len, a.features], |_| rng.random_range(-1.5..1.5));
    let y = Tensor::from_fn(&[a.batch, a.horizon, a.features], |_| rng.random_range(-1.5..1.5));
    let r = gradient_check(&model, &x, &y, LossKind::Mse, a.eps, a.seed)?;
    let passed = r.max_relative_error < a.threshold;
    print_json(&GradcheckOutput {
        variant: a.variant,
        max_relative_error: r.max_relative_error,
        threshold: a.threshold,
        worst_parameter: r.worst_parameter,
        checked: r.checked,
        total: r.total,
        passed,
    })?;
    Ok(if passed { 0 } else { 1 })
}

fn bench(a: BenchmarkArgs) -> Result<i32> {
    let suite = load_suite(&a.suite)?;
    let base = a.suite.parent().unwrap_or(Path::new("."));
    let reg = registry(a.registry.as_deref())?;
    let rows = run_suite(&suite, base, &reg, &a.out, !a.quiet)?;
    print!("{}", report_text(&rows));
    Ok(0)
}
