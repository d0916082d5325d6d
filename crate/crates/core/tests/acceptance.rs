//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tskanmixer::cli::{compute_delta_pct, run_experiment, RunSummary};
use tskanmixer::data_io::{
    apply_split, load_run_config, parse_run_config, Registry, SplitRule, WindowContext,
};
use tskanmixer::mixer::KanSettings;
use tskanmixer::training::{gradient_check, loss_and_grad, relative_error, Adam, WindowedDataset};
use tskanmixer::{
    ForecastModel, KanLayer, KnotGrid, LossKind, ModelConfig, Tensor, TwoDepthKan, Variant,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    if s < limit {
        Ok(())
    } else {
        Err(format!("took {s:.1}s, limit {limit}s"))
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], spread: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-spread..spread))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for variant in Variant::ALL {
        let model = ForecastModel::new(ModelConfig {
            variant,
            input_len: 8,
            horizon: 4,
            features: 3,
            batch_size: 4,
            blocks: 2,
            dropout: 0.0,
            hidden_size: 6,
            learning_rate: 1e-3,
            kan: variant.uses_kan().then(|| KanSettings::new(Some(5), 3, 2)),
            loss: LossKind::Mse,
            seed: 11,
        })
        .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_tensor(&mut rng, &[4, 8, 3], 1.5);
        let y = random_tensor(&mut rng, &[4, 4, 3], 1.5);
        let r = gradient_check(&model, &x, &y, LossKind::Mse, 1e-5, 0).map_err(|e| e.to_string())?;
        if r.checked != r.total {
            return Err(format!("{variant}: only {} of {} parameters checked", r.checked, r.total));
        }
        worst = worst.max(r.max_relative_error);
        parts.push(format!("{variant} {:.2e} ({} params)", r.max_relative_error, r.total));
    }
    within(start.elapsed(), 60.0)?;
    check(
        worst < 1e-5,
        format!("{} in {:.1}s", parts.join(", "), start.elapsed().as_secs_f64()),
    )
}

fn splines() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut partition, mut deriv) = (0.0f64, 0.0f64);
    let mut points = 0;
    for _ in 0..20 {
        let g = rng.random_range(1..=10);
        let k = rng.random_range(0..=5);
        let lo = rng.random_range(-5.0..0.0);
        let hi = lo + rng.random_range(0.5..6.0);
        let grid = KnotGrid::new(lo, hi, g, k).map_err(|e| e.to_string())?;
        let t = grid.knots().to_vec();
        let h = 1e-6 * (hi - lo);
        for _ in 0..500 {
            // interior of a cell: far enough from every knot for a central difference
            let x = loop {
                let x = rng.random_range(lo..hi);
                if t.iter().all(|&kn| (kn - x).abs() > 4.0 * h) {
                    break x;
                }
            };
            points += 1;
            let vals = grid.basis_values(x);
            partition = partition.max((vals.iter().sum::<f64>() - 1.0).abs());
            for (i, &v) in vals.iter().enumerate() {
                if v < 0.0 {
                    return Err(format!("B_{i}({x}) = {v} < 0"));
                }
                let support = t[i] <= x && x < t[i + k + 1];
                if !support && v != 0.0 {
                    return Err(format!("B_{i}({x}) = {v} outside its support"));
                }
            }
            if k >= 1 {
                let d = grid.basis_derivatives(x).map_err(|e| e.to_string())?;
                let plus = grid.basis_values(x + h);
                let minus = grid.basis_values(x - h);
                for i in 0..d.len() {
                    let fd = (plus[i] - minus[i]) / (2.0 * h);
                    deriv = deriv.max(relative_error(d[i], fd));
                }
            }
        }
    }
    within(start.elapsed(), 10.0)?;
    check(
        partition <= 1e-12 && deriv < 1e-5,
        format!("{points} points, partition error {partition:.1e}, derivative error {deriv:.1e}"),
    )
}

/// Cox–de Boor with the last cell closed on the right.
fn cox(t: &[f64], i: usize, k: usize, x: f64, last_cell: usize) -> f64 {
    if k == 0 {
        let hit = if x == t[last_cell + 1] {
            i == last_cell
        } else {
            t[i] <= x && x < t[i + 1]
        };
        return if hit { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    if t[i + k] > t[i] {
        v += (x - t[i]) / (t[i + k] - t[i]) * cox(t, i, k - 1, x, last_cell);
    }
    if t[i + k + 1] > t[i + 1] {
        v += (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * cox(t, i + 1, k - 1, x, last_cell);
    }
    v
}

fn kan_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n_in, n_out) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let grid = KnotGrid::new(-3.0, 3.0, rng.random_range(1..=10), rng.random_range(0..=5))
            .map_err(|e| e.to_string())?;
        let nb = grid.basis_count();
        let coeffs = random_tensor(&mut rng, &[n_out, n_in, nb], 1.0);
        let wb = random_tensor(&mut rng, &[n_out, n_in], 1.0);
        let ws = random_tensor(&mut rng, &[n_out, n_in], 1.0);
        let layer = KanLayer::from_parts(grid.clone(), coeffs.clone(), wb.clone(), ws.clone())
            .map_err(|e| e.to_string())?;
        let x = random_tensor(&mut rng, &[6, n_in], 4.0);
        let got = layer.forward(&x).map_err(|e| e.to_string())?;
        let (k, last_cell) = (grid.degree(), grid.degree() + grid.intervals() - 1);
        for b in 0..6 {
            for j in 0..n_out {
                let mut sum = 0.0;
                for i in 0..n_in {
                    let v = x.data()[b * n_in + i];
                    let z = v.clamp(-3.0, 3.0);
                    let e = j * n_in + i;
                    let mut spline = 0.0;
                    for m in 0..nb {
                        spline += coeffs.data()[e * nb + m] * cox(grid.knots(), m, k, z, last_cell);
                    }
                    sum += wb.data()[e] * v / (1.0 + (-v).exp()) + ws.data()[e] * spline;
                }
                worst = worst.max((got.data()[b * n_out + j] - sum).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("100 layers, max abs difference {worst:.1e}"))
}

fn function_fit() -> Outcome {
    let start = Instant::now();
    let n = 256;
    let x = Tensor::from_fn(&[n, 1], |i| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
    let y = Tensor::from_fn(&[n, 1], |i| (std::f64::consts::PI * x.data()[i]).sin());
    let grid = KnotGrid::new(-3.0, 3.0, 5, 3).map_err(|e| e.to_string())?;
    let mut kan = TwoDepthKan::new(1, Some(5), 1, grid, 0).map_err(|e| e.to_string())?;
    let mut adam = Adam::new(0.01);
    for _ in 0..2000 {
        let (out, hidden) = kan.forward_with_hidden(&x).map_err(|e| e.to_string())?;
        let (_, up) = loss_and_grad(&out, &y, LossKind::Mse).map_err(|e| e.to_string())?;
        let (_, grads) = kan.backward(&x, &hidden, &up).map_err(|e| e.to_string())?;
        adam.step(&mut kan, &grads).map_err(|e| e.to_string())?;
    }
    let out = kan.forward(&x).map_err(|e| e.to_string())?;
    let (mse, _) = loss_and_grad(&out, &y, LossKind::Mse).map_err(|e| e.to_string())?;
    within(start.elapsed(), 30.0)?;
    check(
        mse < 1e-3,
        format!("train MSE {mse:.2e} after 2000 steps in {:.1}s", start.elapsed().as_secs_f64()),
    )
}

/// (dataset, tsmixer MSE, tsmixer MAE, then MSE, ΔMSE, MAE, ΔMAE for v01 and v02)
type Row = (&'static str, f64, f64, [f64; 4], [f64; 4]);

const TABLE: [Row; 10] = [
    ("ETTh1", 0.429, 0.409, [0.285, 33.57, 0.398, 2.69], [0.296, 31.00, 0.405, 0.98]),
    ("ETTh2", 0.195, 0.340, [0.199, -2.05, 0.334, 1.76], [0.158, 18.97, 0.308, 9.41]),
    ("ETTm1", 0.289, 0.341, [0.190, 34.26, 0.296, 13.20], [0.281, 2.77, 0.348, -2.05]),
    ("ETTm2", 0.145, 0.278, [0.131, 9.66, 0.268, 3.60], [0.109, 24.83, 0.251, 9.71]),
    ("NN5_daily", 0.514, 0.493, [0.521, -1.36, 0.498, -1.01], [0.506, 1.56, 0.485, 1.62]),
    ("NN5_weekly", 0.899, 0.739, [0.878, 2.34, 0.731, 1.08], [0.897, 0.22, 0.736, 0.41]),
    ("CIF_2016", 2.698, 0.781, [3.631, -34.58, 1.026, -31.37], [2.936, -8.82, 0.895, -14.59]),
    ("Hospital", 1.607, 0.994, [1.429, 11.08, 0.928, 6.64], [1.556, 3.17, 0.979, 1.51]),
    ("Exchange", 0.018, 0.107, [0.017, 5.56, 0.099, 7.47], [0.016, 11.11, 0.094, 12.15]),
    ("FRED_MD", 0.035, 0.125, [0.037, -5.71, 0.133, -6.4], [0.036, -2.86, 0.125, 0.0]),
];

fn deltas() -> Outcome {
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for (name, mse, mae, v01, v02) in TABLE {
        for row in [v01, v02] {
            for (base, cand, printed) in [(mse, row[0], row[1]), (mae, row[2], row[3])] {
                let d = (compute_delta_pct(base, cand) - printed).abs();
                if d > 0.01 {
                    return Err(format!("{name}: {base} -> {cand} printed {printed}, off by {d:.4}"));
                }
                worst = worst.max(d);
                pairs += 1;
            }
        }
    }
    check(pairs == 40, format!("{pairs} pairs, max deviation {worst:.4} points"))
}

fn end_to_end(dir: &Path) -> Outcome {
    let start = Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let csv = dir.join("synthetic.csv");
    common::write_series(&csv, common::synthetic_series(5000, 2024));
    let registry = Registry::builtin().merged(
        Registry::from_json(&common::registry_json("synthetic", 3, [3500, 750, 750]))
            .map_err(|e| e.to_string())?,
    );
    let mut results: Vec<(Variant, RunSummary)> = Vec::new();
    for variant in Variant::ALL {
        let kan = if variant.uses_kan() {
            r#","kan_dim":8,"kan_grid":3,"kan_k":3"#
        } else {
            ""
        };
        let text = format!(
            r#"{{"dataset":"synthetic","variant":"{variant}","L":32,"H":8,"batch":32,"blocks":2,
              "dropout":0.1,"hidden_size":32,"learning_rate":0.001,"seed":1{kan}}}"#
        );
        let run = parse_run_config(&text).map_err(|e| e.to_string())?;
        let (_, train_cfg, _) = run.resolve(&registry).map_err(|e| e.to_string())?;
        if (train_cfg.max_epochs, train_cfg.patience) != (200, 5) {
            return Err(format!("unexpected regime {train_cfg:?}"));
        }
        let summary = run_experiment(&run, &csv, &registry, &dir.join(variant.to_string()), false)
            .map_err(|e| e.to_string())?;
        results.push((variant, summary));
    }
    let elapsed = start.elapsed();
    let persistence = results[0].1.persistence_test.mse;
    let tsmixer = results
        .iter()
        .find(|(v, _)| *v == Variant::Tsmixer)
        .map(|(_, s)| s.test.mse)
        .unwrap();
    let mut ok = true;
    let mut parts = vec![format!("persistence {persistence:.4}")];
    for (variant, s) in &results {
        let gain = 100.0 * (persistence - s.test.mse) / persistence;
        ok &= gain >= 20.0;
        parts.push(format!(
            "{variant} {:.4} ({gain:.1}% better, {} epochs)",
            s.test.mse, s.epochs
        ));
    }
    let best_kan = results
        .iter()
        .filter(|(v, _)| v.uses_kan())
        .map(|(_, s)| s.test.mse)
        .fold(f64::INFINITY, f64::min);
    let kan_close = best_kan <= 1.10 * tsmixer;
    parts.push(format!("best KAN / tsmixer {:.3}", best_kan / tsmixer));
    parts.push(format!("{:.0}s", elapsed.as_secs_f64()));
    within(elapsed, 600.0).map_err(|e| format!("{e}; {}", parts.join(", ")))?;
    check(ok && kan_close, parts.join(", "))
}

fn determinism(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    common::write_series(&dir.join("toy.csv"), common::synthetic_series(600, 5));
    std::fs::write(dir.join("registry.json"), common::registry_json("toy", 3, [400, 100, 100]))
        .map_err(|e| e.to_string())?;
    for variant in Variant::ALL {
        let kan = if variant.uses_kan() {
            r#","kan_dim":6,"kan_grid":4,"kan_k":3"#
        } else {
            ""
        };
        let config = format!(
            r#"{{"dataset":"toy","variant":"{variant}","L":24,"H":6,"batch":16,"blocks":2,
              "dropout":0.2,"hidden_size":16,"learning_rate":0.001,"seed":3,"max_epochs":4{kan}}}"#
        );
        std::fs::write(dir.join("config.json"), config).map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for attempt in ["first", "second"] {
            let out = dir.join(format!("{variant}_{attempt}"));
            let status = Command::new(env!("CARGO_BIN_EXE_tskanmixer"))
                .current_dir(dir)
                .args(["train", "--config", "config.json", "--data", "toy.csv"])
                .args(["--registry", "registry.json", "--quiet", "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?
                .status;
            if !status.success() {
                return Err(format!("{variant}: train exited with {status}"));
            }
            let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
            outputs.push((read("history.csv")?, read("checkpoint.json")?));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{variant}: artifacts differ between runs"));
        }
    }
    Ok("3 variants, history.csv and checkpoint.json byte-identical".into())
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn protocol() -> Outcome {
    let reg = Registry::builtin();
    let mut runs = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs_dir().join("benchmark"))
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.path()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    paths.sort();
    for path in &paths {
        let run = load_run_config(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let (model, _, _) = run.resolve(&reg).map_err(|e| format!("{}: {e}", path.display()))?;
        ForecastModel::new(model).map_err(|e| format!("{}: {e}", path.display()))?;
        runs.push(run);
    }
    if runs.len() != 30 {
        return Err(format!("{} table configurations, expected 30", runs.len()));
    }
    for name in ["ETTh1", "ETTh2"] {
        let s = apply_split(17_420, reg.get(name).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let lens = [s.train.len(), s.valid.len(), s.test.len()];
        if lens != [8640, 2880, 2880] || s.train.start != 0 {
            return Err(format!("{name} splits {lens:?}"));
        }
    }
    let mut audited = 0usize;
    for spec in &reg.datasets {
        let rows = spec.split_rows().map_err(|e| e.to_string())?;
        if let SplitRule::Rows(literal) = spec.split {
            if rows != literal {
                return Err(format!("{}: {rows:?} vs {literal:?}", spec.name));
            }
        }
        let total = spec.time_steps.unwrap_or(rows.iter().sum());
        let splits = apply_split(total, spec).map_err(|e| e.to_string())?;
        if [splits.train.len(), splits.valid.len(), splits.test.len()] != rows {
            return Err(format!("{}: split lengths differ from {rows:?}", spec.name));
        }
        let run = runs.iter().find(|r| r.dataset == spec.name).ok_or(format!("no config for {}", spec.name))?;
        // every cell holds its row index, so a window's values reveal what it read
        let series = Tensor::from_fn(&[total, spec.features], |i| (i / spec.features) as f64);
        let data = WindowedDataset::new(&series, &splits, run.input_len, run.horizon, spec.context)
            .map_err(|e| format!("{}: {e}", spec.name))?;
        for (w, range) in [
            (&data.train, &splits.train),
            (&data.valid, &splits.valid),
            (&data.test, &splits.test),
        ] {
            let step = (w.len() / 50).max(1);
            for i in (0..w.len()).step_by(step).chain([w.len() - 1]) {
                let (x, y) = w.batch(&[i]).map_err(|e| e.to_string())?;
                let first_input = x.data()[0] as usize;
                let first_target = y.data()[0] as usize;
                let last_target = *y.data().last().unwrap() as usize;
                let isolated = spec.context == WindowContext::Isolated;
                let bad = first_target < range.start
                    || last_target >= range.end
                    || first_target != first_input + run.input_len
                    || (isolated && first_input < range.start);
                if bad {
                    return Err(format!("{}: window {i} reads rows outside {range:?}", spec.name));
                }
                audited += 1;
            }
        }
    }
    Ok(format!("30 configurations, ETTh 8640/2880/2880, {audited} windows audited"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: [Criterion; 8] = [
        ("gradient correctness", Box::new(gradients)),
        ("spline properties", Box::new(splines)),
        ("KAN oracle equivalence", Box::new(kan_oracle)),
        ("function fitting", Box::new(function_fit)),
        ("delta reproduction", Box::new(deltas)),
        ("desk-scale end-to-end", Box::new(|| end_to_end(&dir.path().join("e2e")))),
        ("determinism", Box::new(|| determinism(&dir.path().join("det")))),
        ("protocol fidelity", Box::new(protocol)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
