use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use vacancy_core::features::build_dataset;
use vacancy_core::model::{self, ForestParams, ModelSpec, TrainingData};
use vacancy_core::synth::{generate, SynthConfig};
use vacancy_core::{FeatureSet, Task, QUARTER_MILE_M};

fn data(n_lots: usize, seed: u64) -> TrainingData {
    let cfg = SynthConfig {
        n_lots,
        seed,
        ..SynthConfig::default()
    };
    let ds = build_dataset(&generate(&cfg).unwrap().city, QUARTER_MILE_M).unwrap();
    TrainingData::from_lots(FeatureSet::all(), &ds.rows, Task::Binary).unwrap()
}

fn fit(c: &mut Criterion) {
    let train = data(1200, 1);
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    for trees in [2, 14] {
        let spec = ModelSpec::RandomForest(ForestParams {
            n_trees: trees,
            ..Default::default()
        });
        g.bench_function(format!("rf_{trees}_trees"), |b| b.iter(|| model::fit(&spec, black_box(&train), 0).unwrap()));
    }
    g.finish();
}

fn predict(c: &mut Criterion) {
    let train = data(1200, 2);
    let probe = data(800, 3);
    let mut g = c.benchmark_group("predict");
    for k in [1, 7] {
        let m = model::fit(&ModelSpec::Knn { k }, &train, 0).unwrap();
        g.bench_function(format!("knn_k{k}"), |b| b.iter(|| m.predict(black_box(&probe.rows))));
    }
    g.finish();
}

criterion_group!(benches, fit, predict);
criterion_main!(benches);
