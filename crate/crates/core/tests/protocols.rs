use std::collections::BTreeSet;

use vacancy_core::eval::{grid_search, k_fold_cv, stratified_split, SplitSpec};
use vacancy_core::experiments::{
    feature_subsets, run_conversion_type, run_cross_city, run_feature_subsets, run_within_city_binary, transfer_label,
    transfer_split, Protocol,
};
use vacancy_core::features::{build_dataset, ModelingDataset};
use vacancy_core::model::{Hyperparams, ModelSpec, TrainingData};
use vacancy_core::synth::{generate, generate_pair, RuleWeights, ShiftConfig, SynthConfig};
use vacancy_core::{ClassifierKind, Error, FeatureSet, Task, QUARTER_MILE_M};

fn dataset(cfg: &SynthConfig) -> ModelingDataset {
    build_dataset(&generate(cfg).unwrap().city, QUARTER_MILE_M).unwrap()
}

fn base(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        ..SynthConfig::default()
    }
}

fn adopt_f1(r: &vacancy_core::experiments::ClassifierReport) -> f64 {
    r.report.class("adopt").unwrap().f1
}

#[test]
fn density_rule_favours_density_subset() {
    let cfg = SynthConfig {
        weights: RuleWeights {
            vacant_density: 1.0,
            crime_density: -1.0,
            ..RuleWeights::zero()
        },
        noise: 0.0,
        n_lots: 1200,
        seed: 4,
        ..SynthConfig::default()
    };
    let ds = dataset(&cfg);
    let reports = run_feature_subsets(&ds, &Protocol::default(), 4).unwrap();
    let [_, transit_zone, density] = feature_subsets();
    let f1 = |set: &FeatureSet| reports.iter().find(|(s, _)| s == set).unwrap().1.class("adopt").unwrap().f1;
    assert_eq!(reports.len(), 3);
    assert!(f1(&density) > f1(&transit_zone) + 0.1, "density {} vs transit+zone {}", f1(&density), f1(&transit_zone));
}

#[test]
fn noise_free_rule_is_linearly_learnable() {
    let ds = dataset(&SynthConfig {
        noise: 0.0,
        ..base(2)
    });
    let mut p = Protocol::default();
    p.hyperparams.svm_lambda = vec![1e-5, 1e-4];
    p.hyperparams.svm_epochs = 300;
    let r = run_within_city_binary(&ds, &[ClassifierKind::Svm], &p, 2).unwrap();
    assert!(adopt_f1(&r[0]) >= 0.98, "svm adopt F1 {}", adopt_f1(&r[0]));
}

#[test]
fn zero_shift_transfer_matches_within_city() {
    let kinds = [ClassifierKind::RandomForest];
    let p = Protocol::default();
    let (mut within, mut cross) = (0.0, 0.0);
    for s in 0..5 {
        let (a, b) = generate_pair(&base(s), &ShiftConfig::none()).unwrap();
        let da = build_dataset(&a.city, QUARTER_MILE_M).unwrap();
        let db = build_dataset(&b.city, QUARTER_MILE_M).unwrap();
        within += adopt_f1(&run_within_city_binary(&db, &kinds, &p, s).unwrap()[0]) / 5.0;
        cross += adopt_f1(&run_cross_city(&da, &db, &kinds, &p, s, 1.0, 0.0).unwrap()[0]) / 5.0;
    }
    assert!((within - cross).abs() < 0.05, "within {within:.3} cross {cross:.3}");
}

#[test]
fn transfer_training_and_evaluation_are_disjoint() {
    let cfg = SynthConfig { n_lots: 400, ..base(6) };
    let (a, b) = generate_pair(&cfg, &ShiftConfig::strong()).unwrap();
    let da = build_dataset(&a.city, QUARTER_MILE_M).unwrap();
    let db = build_dataset(&b.city, QUARTER_MILE_M).unwrap();
    let labels = |d: &ModelingDataset| TrainingData::from_lots(FeatureSet::all(), &d.rows, Task::Binary).unwrap().labels;
    let (la, lb) = (labels(&da), labels(&db));
    for (sf, tf) in [(1.0, 0.0), (1.0, 0.25), (0.25, 1.0), (0.5, 1.0), (0.0, 1.0)] {
        let parts = transfer_split(&la, &lb, 9, sf, tf).unwrap();
        for (split, n) in [(&parts.source, la.len()), (&parts.target, lb.len())] {
            let train: BTreeSet<usize> = split.train.iter().copied().collect();
            let held: BTreeSet<usize> = split.validation.iter().copied().collect();
            assert!(train.is_disjoint(&held));
            assert_eq!(train.len() + held.len(), n);
        }
        let evaluated = if parts.evaluate_source { &parts.source } else { &parts.target };
        assert!(!evaluated.validation.is_empty());
        let r = run_cross_city(&da, &db, &[ClassifierKind::Knn], &Protocol::default(), 9, sf, tf).unwrap();
        assert_eq!(r[0].report.confusion.total() as usize, evaluated.validation.len());
    }
    for (sf, tf) in [(1.0, 1.0), (0.5, 0.5), (1.2, 0.0), (1.0, -0.1)] {
        assert!(matches!(transfer_split(&la, &lb, 9, sf, tf), Err(Error::InvalidFractions { .. })));
    }
}

#[test]
fn transfer_labels_name_both_fractions() {
    assert_eq!(transfer_label("Baltimore", 1.0, "Philadelphia", 0.25), "Baltimore: 100% / Philadelphia: 25%");
    assert_eq!(transfer_label("A", 0.5, "B", 1.0), "A: 50% / B: 100%");
}

#[test]
fn conversion_modes() {
    let ds = dataset(&SynthConfig { n_lots: 800, ..base(3) });
    let p = Protocol::default();
    let three = run_conversion_type(&ds, &[ClassifierKind::Knn], &p, 3, Task::ConvertedOnly).unwrap();
    let four = run_conversion_type(&ds, &[ClassifierKind::Knn], &p, 3, Task::ConversionAll).unwrap();
    let classes = |r: &vacancy_core::experiments::ClassifierReport| r.report.confusion.classes.clone();
    assert_eq!(classes(&three[0]), ["community_garden", "qcmos", "urban_farm"]);
    assert_eq!(classes(&four[0]), ["available", "community_garden", "qcmos", "urban_farm"]);
    assert!(run_conversion_type(&ds, &[ClassifierKind::Knn], &p, 3, Task::Binary).is_err());

    let mut stripped = ds.clone();
    stripped.rows.iter_mut().for_each(|r| r.conversion = None);
    let err = run_conversion_type(&stripped, &[ClassifierKind::Knn], &p, 3, Task::ConvertedOnly).unwrap_err();
    assert!(matches!(err, Error::MissingConversionLabels(_)));
    assert!(err.is_data_error());
}

#[test]
fn protocols_are_reproducible() {
    let ds = dataset(&SynthConfig { n_lots: 500, ..base(8) });
    let kinds = [ClassifierKind::RandomForest, ClassifierKind::Knn, ClassifierKind::NaiveBayes];
    let a = run_within_city_binary(&ds, &kinds, &Protocol::default(), 8).unwrap();
    let b = run_within_city_binary(&ds, &kinds, &Protocol::default(), 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].report.to_json().unwrap(), b[0].report.to_json().unwrap());
    let c = run_within_city_binary(&ds, &kinds, &Protocol::default(), 9).unwrap();
    assert_ne!(a, c);
}

#[test]
fn cv_and_grid_search_on_city_data() {
    let ds = dataset(&SynthConfig { n_lots: 400, ..base(10) });
    let data = TrainingData::from_lots(FeatureSet::all(), &ds.rows, Task::Binary).unwrap();
    let h = Hyperparams::default();
    let cands = h.candidates(ClassifierKind::RandomForest);
    let gs = grid_search(&data, &cands, 5, 1).unwrap();
    assert_eq!(gs.results.iter().map(|r| r.param).collect::<Vec<_>>(), [2.0, 8.0, 14.0]);
    assert!(gs.results.iter().all(|r| r.accuracy_sd >= 0.0 && r.fold_accuracies.len() == 5));
    assert_eq!(gs, grid_search(&data, &cands, 5, 1).unwrap());
    let single = grid_search(&data, &[ModelSpec::Knn { k: 3 }], 5, 1).unwrap();
    assert_eq!(single.best, ModelSpec::Knn { k: 3 });
    assert_eq!(k_fold_cv(&data, &cands[1], 5, 2).unwrap(), k_fold_cv(&data, &cands[1], 5, 2).unwrap());
}

#[test]
fn full_sized_split() {
    let ds = dataset(&SynthConfig {
        n_lots: 1907,
        noise: 0.0,
        ..base(11)
    });
    let labels = TrainingData::from_lots(FeatureSet::all(), &ds.rows, Task::Binary).unwrap().labels;
    let adopt = labels.iter().filter(|l| *l == "adopt").count();
    assert_eq!(adopt, 887, "adopt share follows the configured fraction");
    let split = stratified_split(&labels, &SplitSpec::new(1)).unwrap();
    assert!((split.train.len() as i64 - 1144).abs() <= 1);
    assert_eq!(split.train.len() + split.validation.len(), 1907);
}
