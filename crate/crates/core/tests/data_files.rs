use std::io::Write;
use std::path::PathBuf;

use proptest::prelude::*;
use tskanmixer::data_io::{
    apply_split, load_csv, load_run_config, read_csv, write_csv, RawSeries, Registry,
};
use tskanmixer::{Tensor, Variant};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn every_benchmark_config_parses() {
    let reg = Registry::builtin();
    let mut count = [0usize; 3];
    for entry in std::fs::read_dir(configs_dir().join("benchmark")).unwrap() {
        let path = entry.unwrap().path();
        let run = load_run_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let (model, train, spec) = run.resolve(&reg).unwrap();
        model.validate().unwrap();
        assert_eq!(model.features, spec.features);
        assert!(train.patience >= 1 && train.max_epochs >= 1);
        count[Variant::ALL.iter().position(|v| *v == run.variant).unwrap()] += 1;
    }
    assert_eq!(count, [10, 10, 10]);
}

#[test]
fn benchmark_config_spot_checks() {
    let dir = configs_dir().join("benchmark");
    let v02 = load_run_config(&dir.join("ETTh2_tskanmixer_v02.json")).unwrap();
    assert_eq!(
        (v02.batch_size, v02.blocks, v02.dropout, v02.hidden_size, v02.learning_rate),
        (320, 2, 0.3, 64, 0.0001)
    );
    assert_eq!((v02.kan_dim, v02.kan_grid, v02.kan_k), (Some(1025), Some(5), Some(3)));
    let hosp = load_run_config(&dir.join("Hospital_tskanmixer_v01.json")).unwrap();
    assert_eq!(hosp.hidden_size, 767);
    assert_eq!((hosp.kan_dim, hosp.kan_grid, hosp.kan_k), (Some(24), Some(10), Some(2)));
}

#[test]
fn registry_file_matches_builtin() {
    let file = Registry::load(&configs_dir().join("registry.json")).unwrap();
    assert_eq!(file, Registry::builtin());
    let etth1 = file.get("ETTh1").unwrap();
    assert_eq!((etth1.features, etth1.time_steps), (7, Some(17_420)));
    let fred = apply_split(728, file.get("FRED_MD").unwrap()).unwrap();
    assert_eq!(fred.test.end, 698 + 14 + 14);
}

#[test]
fn small_file_in_order_with_spec() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(b"a,b\n1,2\n3,4\n5,6\n").unwrap();
    let reg = Registry::from_json(
        r#"{"datasets":[{"name":"t","features":2,"time_steps":3,"granularity":"daily","split":{"rows":[1,1,1]}}]}"#,
    )
    .unwrap();
    let s = load_csv(f.path(), reg.get("t").unwrap()).unwrap();
    assert_eq!(s.values.shape(), &[3, 2]);
    assert_eq!(s.values.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert!(load_csv(f.path(), Registry::builtin().get("ETTh1").unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(
        rows in 1usize..20,
        cols in 1usize..5,
        seed in any::<u64>(),
        stamps in any::<bool>(),
    ) {
        let mut state = seed;
        let values = Tensor::from_fn(&[rows, cols], |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mantissa = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let exp = ((state >> 3) % 40) as i32 - 20;
            mantissa * 10f64.powi(exp)
        });
        let series = RawSeries {
            timestamps: stamps.then(|| (0..rows).map(|i| format!("t{i}")).collect()),
            values,
            names: (0..cols).map(|i| format!("c{i}")).collect(),
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(f.path(), &series).unwrap();
        let back = read_csv(f.path(), Some(cols)).unwrap();
        prop_assert_eq!(back, series);
    }
}
