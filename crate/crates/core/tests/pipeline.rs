use qoe_core::dataset::synthetic::generate_synthetic;
use qoe_core::dataset::{
    default_allowed_ranges, fit_discretizer, read_csv, remove_outliers, split, write_csv, Dataset,
    Kqi, OutlierFences, OutlierPolicy, Provenance, Schema, Split, SplitFractions,
};
use qoe_core::feature_ranking::{center_out_order, rank_features};
use qoe_core::metrics::mase_vs_mean;
use qoe_core::qoe_objective::{
    default_conditions, optimize, Method, ModelPredictor, ObjectiveSpec,
};
use qoe_core::qubo_ensemble::{self, EnsembleConfig};
use qoe_core::tt_regressor::{fit_tt, TTModel, TrainConfig};
use qoe_core::ttopt::TtoptConfig;

#[test]
fn outlier_fences_are_idempotent_when_not_refit() {
    let d = generate_synthetic(2000, 4, 0.6).unwrap();
    let fences = OutlierFences::fit(&d, OutlierPolicy::default()).unwrap();
    let once = fences.apply(&d).unwrap();
    let twice = fences.apply(&once).unwrap();
    assert!(once.len() < d.len());
    assert_eq!(once.samples, twice.samples);
}

#[test]
fn split_partitions_the_filtered_data_and_survives_csv() {
    let d = remove_outliers(
        &generate_synthetic(900, 5, 0.3).unwrap(),
        OutlierPolicy::default(),
    )
    .unwrap();
    let s = split(&d, SplitFractions::default(), 8).unwrap();
    let (a, b, c) = s.split_counts();
    assert_eq!(a + b + c, d.len());
    assert_eq!(s.train().len() + s.val().len() + s.test().len(), d.len());

    let mut buf = Vec::new();
    write_csv(&s, &mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &Schema::default(), Provenance::Derived).unwrap();
    assert!(back.rejects.is_empty());
    assert_eq!(back.dataset.samples, s.samples);
    assert_eq!(back.dataset.splits, s.splits);
    assert!(s.splits.unwrap().contains(&Split::Val));
}

#[test]
fn train_persist_reload_optimize() {
    let d = split(
        &generate_synthetic(1200, 6, 0.1).unwrap(),
        SplitFractions::default(),
        6,
    )
    .unwrap();
    let disc = fit_discretizer(&default_allowed_ranges()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for kqi in [Kqi::Latency, Kqi::Efps] {
        let order = center_out_order(&rank_features(&d, kqi.name(), 20).unwrap()).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        let m = fit_tt(&d, &order, &disc, kqi, &cfg).unwrap();
        let test = d.test();
        let preds = m.predict_many(&test).unwrap();
        let mase =
            mase_vs_mean(&preds, &Dataset::target_column(&test, kqi), m.target_mean).unwrap();
        assert!(mase.mase < 1.0, "{kqi:?} {}", mase.mase);
        let p = dir.path().join(format!("{}.ttm", kqi.slug()));
        m.save(&p).unwrap();
        let back = TTModel::load(&p).unwrap();
        assert_eq!(back.predict_many(&test).unwrap(), preds);
        paths.push(p);
    }
    let predictor = ModelPredictor {
        latency: Box::new(TTModel::load(&paths[0]).unwrap()),
        efps: Box::new(TTModel::load(&paths[1]).unwrap()),
        freeze: None,
        conditions: default_conditions(),
    };
    let spec = ObjectiveSpec::with_alpha(0.6, 1);
    let brute = optimize(&spec, &predictor, Method::Brute, &TtoptConfig::default()).unwrap();
    let tt = optimize(&spec, &predictor, Method::Ttopt, &TtoptConfig::default()).unwrap();
    assert_eq!(brute.result.evaluations, 1224);
    assert!(tt.result.evaluations < 1224);
    assert!(tt.result.best_value <= brute.result.best_value);
    assert!((brute.result.best_value - tt.result.best_value) / brute.result.best_value <= 0.0015);
}

#[test]
fn ensemble_reload_is_bit_identical() {
    let d = split(
        &generate_synthetic(600, 9, 0.1).unwrap(),
        SplitFractions::default(),
        9,
    )
    .unwrap();
    let features: Vec<String> = rank_features(&d, "efps", 20)
        .unwrap()
        .top(4)
        .feature_names();
    let m = qubo_ensemble::fit(&d, &EnsembleConfig::new(Kqi::Efps, features)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    m.save(&p).unwrap();
    let back = qubo_ensemble::EnsembleModel::load(&p).unwrap();
    let test = d.test();
    let a = m.predict_many(&test).unwrap();
    let b = back.predict_many(&test).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
