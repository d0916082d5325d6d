#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tskanmixer::data_io::{write_csv, RawSeries};
use tskanmixer::Tensor;

/// Two phase-shifted daily cycles with observation noise, plus a
/// mean-reverting AR(1) trend. Three features, `steps` rows.
pub fn synthetic_series(steps: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let shock = Normal::new(0.0, 0.05).unwrap();
    let mut trend = 0.0f64;
    let mut data = Vec::with_capacity(steps * 3);
    for t in 0..steps {
        let phase = 2.0 * PI * t as f64 / 24.0;
        trend = (0.99 * trend + shock.sample(&mut rng)).clamp(-3.0, 3.0);
        data.push(phase.sin() + 0.3 * (phase / 7.0).sin() + noise.sample(&mut rng));
        data.push(0.8 * (phase + PI / 3.0).sin() + noise.sample(&mut rng));
        data.push(trend + 0.2 * (2.0 * phase).sin());
    }
    Tensor::new(vec![steps, 3], data).unwrap()
}

pub fn write_series(path: &Path, values: Tensor) {
    let c = values.shape()[1];
    write_csv(
        path,
        &RawSeries {
            timestamps: None,
            values,
            names: (0..c).map(|i| format!("x{i}")).collect(),
        },
    )
    .unwrap();
}

/// Registry with one row-split dataset.
pub fn registry_json(name: &str, features: usize, split: [usize; 3]) -> String {
    format!(
        r#"{{"datasets":[{{"name":"{name}","features":{features},"granularity":"hourly","split":{{"rows":[{},{},{}]}}}}]}}"#,
        split[0], split[1], split[2]
    )
}
