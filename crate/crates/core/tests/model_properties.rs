use rand::Rng;
use rand_distr::{Distribution, Normal};
use vacancy_core::eval::accuracy;
use vacancy_core::features::build_dataset;
use vacancy_core::model::{self, svm, ForestParams, Mlp, MlpParams, ModelSpec, NbParams, Preprocessor, SvmParams, TrainingData};
use vacancy_core::synth::{generate, SynthConfig};
use vacancy_core::{seed, Feature, FeatureSet, FeatureVector, Task, ZoneCategory, QUARTER_MILE_M};

fn fv(x: f64, y: f64) -> FeatureVector {
    FeatureVector {
        lib_dist: x,
        park_dist: y,
        school_dist: 0.0,
        transit_dist: 0.0,
        price_diff: 0.0,
        vacant_density: 0,
        crime_density: 0,
        zone: ZoneCategory::Residential,
    }
}

fn two() -> FeatureSet {
    FeatureSet::new([Feature::LibDist, Feature::ParkDist]).unwrap()
}

fn blobs(n: usize, gap: f64, seed_: u64) -> TrainingData {
    let mut rng = seed::rng(seed_);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = if i % 2 == 0 { 0.0 } else { gap };
        rows.push(fv(c + normal.sample(&mut rng), c + normal.sample(&mut rng)));
        labels.push(if i % 2 == 0 { "west" } else { "east" }.to_string());
    }
    TrainingData::new(two(), rows, labels).unwrap()
}

fn city_data(n_lots: usize, seed_: u64) -> TrainingData {
    let cfg = SynthConfig {
        n_lots,
        seed: seed_,
        ..SynthConfig::default()
    };
    let ds = build_dataset(&generate(&cfg).unwrap().city, QUARTER_MILE_M).unwrap();
    TrainingData::from_lots(FeatureSet::all(), &ds.rows, Task::Binary).unwrap()
}

fn all_specs() -> Vec<ModelSpec> {
    vec![
        ModelSpec::RandomForest(ForestParams::default()),
        ModelSpec::Knn { k: 5 },
        ModelSpec::NaiveBayes(NbParams::default()),
        ModelSpec::Mlp(MlpParams {
            hidden: 5,
            epochs: 60,
            ..Default::default()
        }),
        ModelSpec::Svm(SvmParams::default()),
    ]
}

#[test]
fn standardised_training_columns() {
    let data = city_data(300, 1);
    let pre = Preprocessor::fit(&data.schema, &data.rows);
    let x = pre.design_matrix(&data.rows);
    let n = x.len() as f64;
    for j in 0..pre.numeric_width() {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
        assert!((sd - 1.0).abs() < 1e-9, "column {j} sd {sd}");
    }
    for r in &x {
        assert_eq!(r[pre.numeric_width()..].iter().sum::<f64>(), 1.0);
    }
}

#[test]
fn predicted_labels_come_from_training_labels() {
    let data = city_data(250, 2);
    let probe = city_data(120, 3);
    for spec in all_specs() {
        let m = model::fit(&spec, &data, 4).unwrap();
        let pred = m.predict(&probe.rows);
        assert_eq!(pred.len(), probe.rows.len());
        assert!(pred.iter().all(|p| m.labels().contains(p)), "{spec:?}");
        assert_eq!(pred, m.predict(&probe.rows), "predict is pure");
        assert!(m.predict(&[]).is_empty());
    }
}

#[test]
fn same_seed_same_model_on_any_pool() {
    let data = city_data(300, 5);
    for spec in all_specs() {
        let fit_in = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| model::fit(&spec, &data, 11).unwrap())
        };
        let (a, b) = (fit_in(1), fit_in(4));
        assert_eq!(a, b, "{spec:?}");
        assert_eq!(model::fit(&spec, &data, 11).unwrap(), a);
    }
}

#[test]
fn knn_ignores_column_scale() {
    // Power-of-two factors keep standardisation bit-exact.
    let data = city_data(300, 6);
    let probe = city_data(150, 7);
    let scale = |rows: &[FeatureVector], f: f64| -> Vec<FeatureVector> {
        rows.iter()
            .map(|r| FeatureVector {
                lib_dist: r.lib_dist * f,
                price_diff: r.price_diff * f,
                ..*r
            })
            .collect()
    };
    for k in [1, 3, 7] {
        let base = model::fit(&ModelSpec::Knn { k }, &data, 0).unwrap().predict(&probe.rows);
        for f in [8.0, 0.25] {
            let scaled = TrainingData::new(data.schema.clone(), scale(&data.rows, f), data.labels.clone()).unwrap();
            let m = model::fit(&ModelSpec::Knn { k }, &scaled, 0).unwrap();
            assert_eq!(m.predict(&scale(&probe.rows, f)), base, "k {k} factor {f}");
        }
    }
}

#[test]
fn naive_bayes_separates_blobs() {
    let train = blobs(200, 6.0, 1);
    let test = blobs(200, 6.0, 2);
    let m = model::fit(&ModelSpec::NaiveBayes(NbParams::default()), &train, 0).unwrap();
    let acc = accuracy(&test.labels, &m.predict(&test.rows));
    assert!(acc >= 0.95, "held-out accuracy {acc}");
    for r in &test.rows {
        let post = m.posterior(r).unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn svm_objective_improves_on_zero() {
    let data = blobs(200, 6.0, 3);
    let pre = Preprocessor::fit(&data.schema, &data.rows);
    let x = pre.design_matrix(&data.rows);
    let y: Vec<f64> = data.labels.iter().map(|l| if l == "east" { 1.0 } else { -1.0 }).collect();
    for lambda in [1e-4, 1e-3, 1e-2] {
        let params = SvmParams { lambda, epochs: 100 };
        let w = svm::pegasos(&x, &y, &params, &mut seed::rng(1));
        let zero = vec![0.0; w.len()];
        assert!(svm::objective(&w, &x, &y, lambda) <= svm::objective(&zero, &x, &y, lambda));
        let m = model::fit(&ModelSpec::Svm(params), &data, 1).unwrap();
        assert_eq!(accuracy(&data.labels, &m.predict(&data.rows)), 1.0, "lambda {lambda}");
    }
}

#[test]
fn mlp_learns_xor() {
    // Four clusters in the quadrants; the label is the XOR of the two signs.
    let mut rng = seed::rng(12);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..200 {
        let (sx, sy) = ([-1.0, 1.0][i % 2], [-1.0, 1.0][(i / 2) % 2]);
        x.push(vec![sx + rng.gen_range(-0.3..0.3), sy + rng.gen_range(-0.3..0.3)]);
        y.push(usize::from((sx > 0.0) != (sy > 0.0)));
    }
    let params = MlpParams {
        hidden: 4,
        learning_rate: 0.01,
        epochs: 500,
    };
    let solved = (0..10u64)
        .filter(|&s| {
            let net = Mlp::fit(&x, &y, 2, &params, s).unwrap();
            x.iter().zip(&y).all(|(xi, &yi)| net.predict(xi) == yi)
        })
        .count();
    assert!(solved >= 8, "{solved}/10 seeds solved XOR");
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut rng = seed::rng(77);
    for (n_in, hidden, n_out) in [(2, 3, 2), (11, 8, 3), (7, 10, 4)] {
        let mut net = Mlp::init(n_in, hidden, n_out, &mut seed::rng(n_in as u64));
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..n_in).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let ys: Vec<usize> = (0..5).map(|_| rng.gen_range(0..n_out)).collect();
        let g = net.gradient(&xs, &ys);
        let theta = net.params();
        for j in 0..theta.len() {
            let mut t = theta.clone();
            t[j] += 1e-5;
            net.set_params(&t);
            let up = net.loss(&xs, &ys);
            t[j] = theta[j] - 1e-5;
            net.set_params(&t);
            let down = net.loss(&xs, &ys);
            net.set_params(&theta);
            let fd = (up - down) / 2e-5;
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {j}: analytic {} vs numeric {fd}", g[j]);
        }
    }
}

#[test]
fn big_forest_beats_majority_baseline() {
    let data = city_data(400, 8);
    let majority = data
        .classes()
        .iter()
        .map(|c| data.labels.iter().filter(|l| *l == c).count())
        .max()
        .unwrap() as f64
        / data.len() as f64;
    let m = model::fit(&ModelSpec::RandomForest(ForestParams { n_trees: 64, ..Default::default() }), &data, 3).unwrap();
    assert!(accuracy(&data.labels, &m.predict(&data.rows)) >= majority);
}

#[test]
fn restandardised_input_keeps_svm_predictions() {
    let data = blobs(200, 6.0, 9);
    let pre = Preprocessor::fit(&data.schema, &data.rows);
    let std_rows: Vec<FeatureVector> = data
        .rows
        .iter()
        .map(|r| {
            let z = pre.standardize(r);
            fv(z[0], z[1])
        })
        .collect();
    let already = TrainingData::new(two(), std_rows.clone(), data.labels.clone()).unwrap();
    let spec = ModelSpec::Svm(SvmParams::default());
    let a = model::fit(&spec, &data, 2).unwrap().predict(&data.rows);
    let b = model::fit(&spec, &already, 2).unwrap().predict(&std_rows);
    assert_eq!(a, b);
}
