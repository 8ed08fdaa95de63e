//! Splitting, cross-validation, grid search and classification metrics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fit, ModelSpec, TrainingData};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_fraction: 0.6,
            stratified: true,
            seed,
        }
    }
}

/// Disjoint, exhaustive row indices (ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Row indices grouped by label, labels in sorted order.
fn by_class(labels: &[String]) -> BTreeMap<&str, Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        m.entry(l.as_str()).or_default().push(i);
    }
    m
}

pub fn stratified_split(labels: &[String], spec: &SplitSpec) -> Result<Split> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidParameter(format!("train fraction {f} outside (0, 1)")));
    }
    let mut rng = seed::rng(spec.seed);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    if spec.stratified {
        for (class, mut idx) in by_class(labels) {
            if idx.len() < 2 {
                return Err(Error::TooFewPerClass {
                    class: class.to_string(),
                    count: idx.len(),
                    needed: 2,
                });
            }
            idx.shuffle(&mut rng);
            let n_train = ((f * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
            train.extend_from_slice(&idx[..n_train]);
            validation.extend_from_slice(&idx[n_train..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut rng);
        let n_train = (f * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        validation.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(Split { train, validation })
}

/// Stratified selection of `fraction` of the rows, allowing the endpoints 0
/// (nothing selected) and 1 (everything selected).
pub fn take_fraction(labels: &[String], fraction: f64, seed: u64) -> Result<Split> {
    if fraction == 0.0 {
        return Ok(Split {
            train: vec![],
            validation: (0..labels.len()).collect(),
        });
    }
    if fraction == 1.0 {
        return Ok(Split {
            train: (0..labels.len()).collect(),
            validation: vec![],
        });
    }
    stratified_split(
        labels,
        &SplitSpec {
            train_fraction: fraction,
            stratified: true,
            seed,
        },
    )
}

/// `k` stratified folds: each class is shuffled and dealt round-robin, the
/// dealing position carrying over between classes so fold sizes differ by at
/// most one.
pub fn stratified_folds(labels: &[String], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{k} folds over {} rows",
            labels.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, mut idx) in by_class(labels) {
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub param: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation across folds.
    pub accuracy_sd: f64,
    pub fold_accuracies: Vec<f64>,
}

impl CvResult {
    pub fn from_folds(param: f64, fold_accuracies: Vec<f64>) -> Self {
        let n = fold_accuracies.len() as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / n;
        let sd = if fold_accuracies.len() > 1 {
            (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        CvResult {
            param,
            mean_accuracy: mean,
            accuracy_sd: sd,
            fold_accuracies,
        }
    }
}

/// Runs `evaluate(train_idx, test_idx, fold)` over stratified folds and
/// collects the per-fold accuracies in fold order.
pub fn k_fold_cv_with<F>(labels: &[String], k: usize, seed: u64, evaluate: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize], &[usize], usize) -> Result<f64> + Sync,
{
    let folds = stratified_folds(labels, k, seed)?;
    (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            evaluate(&train, &folds[f], f)
        })
        .collect()
}

pub fn accuracy(actual: &[String], predicted: &[String]) -> f64 {
    let hits = actual.iter().zip(predicted).filter(|(a, p)| a == p).count();
    hits as f64 / actual.len().max(1) as f64
}

/// Cross-validated accuracy of `spec`. Fold `f` fits with a seed derived from
/// `(seed, f)`.
pub fn k_fold_cv(data: &TrainingData, spec: &ModelSpec, k: usize, seed: u64) -> Result<CvResult> {
    let folds_seed = seed::derive(seed, "folds");
    let accs = k_fold_cv_with(&data.labels, k, folds_seed, |train, test, f| {
        let model = fit(spec, &data.subset(train), seed::derive_index(seed, f as u64))?;
        let test_data = data.subset(test);
        Ok(accuracy(&test_data.labels, &model.predict(&test_data.rows)))
    })?;
    Ok(CvResult::from_folds(spec.grid_value(), accs))
}

/// Index of the best result: highest mean accuracy, ties to the smaller
/// parameter value.
pub fn select_best(results: &[CvResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &results[b];
                if r.mean_accuracy > cur.mean_accuracy
                    || (r.mean_accuracy == cur.mean_accuracy && r.param < cur.param)
                {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: ModelSpec,
    pub results: Vec<CvResult>,
}

/// Every candidate is scored on the same folds.
pub fn grid_search(data: &TrainingData, candidates: &[ModelSpec], k: usize, seed: u64) -> Result<GridSearch> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    let results = candidates
        .par_iter()
        .map(|spec| k_fold_cv(data, spec, k, seed))
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&results).expect("non-empty grid");
    Ok(GridSearch {
        best: candidates[best],
        results,
    })
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[predicted][actual]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = classes.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::SchemaMismatch(format!("confusion matrix is not {n}x{n}")));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    /// Classes are the sorted union of both label lists.
    pub fn from_labels(actual: &[String], predicted: &[String]) -> Self {
        let classes: Vec<String> = actual
            .iter()
            .chain(predicted)
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::from_labels_with(classes, actual, predicted)
    }

    /// `classes` must contain every label that occurs.
    pub fn from_labels_with(classes: Vec<String>, actual: &[String], predicted: &[String]) -> Self {
        let n = classes.len();
        let mut counts = vec![vec![0u64; n]; n];
        let pos = |l: &String| classes.iter().position(|c| c == l).expect("label in class list");
        for (a, p) in actual.iter().zip(predicted) {
            counts[pos(p)][pos(a)] += 1;
        }
        ConfusionMatrix { classes, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model: Option<String>,
    pub params: Option<ModelSpec>,
    pub seed: Option<u64>,
    pub split: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub metadata: ReportMetadata,
}

impl EvaluationReport {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}


/// Per-class precision/recall/F1 (zero for empty denominators), their
/// unweighted means, and accuracy.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<EvaluationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = cm.classes.len();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = cm.counts[c].iter().sum();
            let actual: u64 = cm.counts.iter().map(|row| row[c]).sum();
            ClassMetrics {
                class: cm.classes[c].clone(),
                precision: ratio(tp, predicted),
                recall: ratio(tp, actual),
                // harmonic mean of the two, from counts: 2TP / (2TP + FP + FN)
                f1: ratio(2 * tp, predicted + actual),
                support: actual,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let trace: u64 = (0..n).map(|c| cm.counts[c][c]).sum();
    Ok(EvaluationReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: trace as f64 / total as f64,
        per_class,
        confusion: cm.clone(),
        metadata: ReportMetadata::default(),
    })
}
