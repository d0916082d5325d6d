mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tskanmixer::data_io::{apply_split, Registry, WindowContext};
use tskanmixer::mixer::KanSettings;
use tskanmixer::training::{
    evaluate, evaluate_batched, standardize, train, window, TrainConfig, WindowedDataset, Windows,
};
use tskanmixer::{ForecastModel, LossKind, ModelConfig, Tensor, Variant};

fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        input_len: 12,
        horizon: 4,
        features: 3,
        batch_size: 16,
        blocks: 1,
        dropout: 0.1,
        hidden_size: 8,
        learning_rate: 1e-3,
        kan: variant.uses_kan().then(|| KanSettings::new(Some(6), 3, 2)),
        loss: LossKind::Mse,
        seed: 5,
    }
}

fn small_data() -> WindowedDataset {
    let series = common::synthetic_series(300, 1);
    let splits = tskanmixer::data_io::SplitRanges {
        train: 0..200,
        valid: 200..250,
        test: 250..300,
    };
    let z = standardize(&series, splits.train.clone()).unwrap();
    WindowedDataset::new(&z.values, &splits, 12, 4, WindowContext::Isolated).unwrap()
}

fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        patience: 3,
        loss: LossKind::Mse,
        learning_rate: 1e-3,
        batch_size: 16,
        seed: 9,
    }
}

#[test]
fn standardize_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = Tensor::from_fn(&[500, 4], |i| rng.random_range(-5.0..5.0) + (i % 4) as f64 * 10.0);
    let z = standardize(&s, 0..300).unwrap();
    for c in 0..4 {
        let col: Vec<f64> = (0..300).map(|t| z.values.data()[t * 4 + c]).collect();
        let mean = col.iter().sum::<f64>() / 300.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 300.0;
        assert!(mean.abs() < 1e-10);
        assert!((var.sqrt() - 1.0).abs() < 1e-10);
    }
    let again = standardize(&z.values, 0..300).unwrap();
    for (a, b) in again.values.data().iter().zip(z.values.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn evaluate_matches_flat_loop() {
    let data = small_data();
    let model = ForecastModel::new(small_config(Variant::TskanmixerV01)).unwrap();
    let m = evaluate(&model, &data.test).unwrap();
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for i in 0..data.test.len() {
        let (x, y) = data.test.batch(&[i]).unwrap();
        let p = model.predict(&x).unwrap();
        for (a, b) in p.data().iter().zip(y.data()) {
            sq += (a - b) * (a - b);
            abs += (a - b).abs();
            n += 1;
        }
    }
    assert!((m.mse - sq / n as f64).abs() < 1e-12);
    assert!((m.mae - abs / n as f64).abs() < 1e-12);
    for batch in [1, 5, 1000] {
        let b = evaluate_batched(&model, &data.test, batch).unwrap();
        assert!((b.mse - m.mse).abs() < 1e-12 && (b.mae - m.mae).abs() < 1e-12);
    }
}

#[test]
fn training_is_deterministic() {
    let data = small_data();
    for variant in Variant::ALL {
        let run = || {
            let model = ForecastModel::new(small_config(variant)).unwrap();
            train(model, &data, &train_config(4)).unwrap()
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(h1.train_loss, h2.train_loss);
        assert_eq!(h1.valid_loss, h2.valid_loss);
        assert_eq!(m1, m2);
    }
}

#[test]
fn returns_best_snapshot() {
    let data = small_data();
    let model = ForecastModel::new(small_config(Variant::Tsmixer)).unwrap();
    let (best, h) = train(model, &data, &train_config(12)).unwrap();
    assert!(h.epochs() <= 12);
    assert_eq!(h.train_loss.len(), h.valid_loss.len());
    let min = h.valid_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_valid_loss(), min);
    assert!(h.best_valid_loss() <= h.valid_loss[0]);
    assert_eq!(evaluate(&best, &data.valid).unwrap().mse, h.best_valid_loss());
    assert!(h.train_loss.last().unwrap() < &h.train_loss[0]);
}

#[test]
fn rejects_bad_settings() {
    let series = common::synthetic_series(100, 2);
    let w = window(&series, 12, 4).unwrap();
    let single = Windows::over(&series, 0..16, 12, 4).unwrap();
    assert_eq!(single.len(), 1);
    let model = ForecastModel::new(small_config(Variant::Tsmixer)).unwrap();
    let data = WindowedDataset {
        train: single,
        valid: w.clone(),
        test: w.clone(),
    };
    assert!(train(model.clone(), &data, &train_config(1)).is_err());
    let data = WindowedDataset {
        train: w.clone(),
        valid: w.clone(),
        test: w,
    };
    let mut cfg = train_config(1);
    cfg.patience = 0;
    assert!(train(model, &data, &cfg).is_err());
}

/// Every window of every split reads only rows of that split (isolated) or
/// only earlier rows for its inputs (preceding).
fn audit(data: &WindowedDataset, splits: &tskanmixer::data_io::SplitRanges, isolated: bool) {
    for (w, range) in [(&data.train, &splits.train), (&data.valid, &splits.valid), (&data.test, &splits.test)] {
        assert_eq!(w.split(), *range);
        for i in 0..w.len() {
            let t = w.target_span(i);
            assert!(range.start <= t.start && t.end <= range.end);
            let all = w.absolute_span(i);
            assert!(all.end <= range.end);
            if isolated {
                assert!(all.start >= range.start);
            }
        }
    }
}

#[test]
fn window_index_audit() {
    let reg = Registry::builtin();
    let spec = reg.get("NN5_weekly").unwrap();
    let series = common::synthetic_series(113, 3);
    let splits = apply_split(113, spec).unwrap();
    let data = WindowedDataset::new(&series, &splits, 4, 2, WindowContext::Isolated).unwrap();
    audit(&data, &splits, true);
    assert_eq!(data.valid.len(), 8 - 4 - 2 + 1);
    let data = WindowedDataset::new(&series, &splits, 16, 8, WindowContext::Preceding).unwrap();
    audit(&data, &splits, false);
    assert_eq!(data.test.len(), 1);
    assert!(WindowedDataset::new(&series, &splits, 16, 8, WindowContext::Isolated).is_err());
}
