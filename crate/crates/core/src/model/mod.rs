//! Preprocessing and the five classifiers behind one fit/predict contract.

pub mod bayes;
pub mod forest;
pub mod knn;
pub mod mlp;
pub mod preprocess;
pub mod svm;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureVector, LabeledLot, Task};

pub use bayes::{NaiveBayes, NbParams};
pub use forest::{Forest, ForestParams};
pub use knn::Knn;
pub use mlp::{Mlp, MlpParams};
pub use preprocess::Preprocessor;
pub use svm::{LinearSvm, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[serde(alias = "rf")]
    RandomForest,
    Knn,
    #[serde(alias = "nb")]
    NaiveBayes,
    Mlp,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::RandomForest,
        ClassifierKind::Knn,
        ClassifierKind::NaiveBayes,
        ClassifierKind::Mlp,
        ClassifierKind::Svm,
    ];

    pub fn short(&self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::Knn => "knn",
            ClassifierKind::NaiveBayes => "nb",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Svm => "svm",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "Random Forest",
            ClassifierKind::Knn => "k-NN",
            ClassifierKind::NaiveBayes => "Naive Bayes",
            ClassifierKind::Mlp => "MLP",
            ClassifierKind::Svm => "SVM",
        }
    }

    /// Name of the tuned hyperparameter.
    pub fn grid_param(&self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "n_trees",
            ClassifierKind::Knn => "k",
            ClassifierKind::NaiveBayes => "laplace_alpha",
            ClassifierKind::Mlp => "hidden_size",
            ClassifierKind::Svm => "lambda",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" | "random_forest" => Ok(ClassifierKind::RandomForest),
            "knn" | "k-nn" => Ok(ClassifierKind::Knn),
            "nb" | "naive_bayes" => Ok(ClassifierKind::NaiveBayes),
            "mlp" => Ok(ClassifierKind::Mlp),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(Error::InvalidParameter(format!("unknown classifier `{other}`"))),
        }
    }
}

/// A fully specified classifier configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(ForestParams),
    Knn { k: usize },
    NaiveBayes(NbParams),
    Mlp(MlpParams),
    Svm(SvmParams),
}

impl ModelSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ModelSpec::RandomForest(_) => ClassifierKind::RandomForest,
            ModelSpec::Knn { .. } => ClassifierKind::Knn,
            ModelSpec::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            ModelSpec::Mlp(_) => ClassifierKind::Mlp,
            ModelSpec::Svm(_) => ClassifierKind::Svm,
        }
    }

    /// Value of the tuned hyperparameter.
    pub fn grid_value(&self) -> f64 {
        match self {
            ModelSpec::RandomForest(p) => p.n_trees as f64,
            ModelSpec::Knn { k } => *k as f64,
            ModelSpec::NaiveBayes(p) => p.laplace_alpha,
            ModelSpec::Mlp(p) => p.hidden as f64,
            ModelSpec::Svm(p) => p.lambda,
        }
    }
}

/// Hyperparameter grids and fixed settings per classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub rf_trees: Vec<usize>,
    pub rf_bootstrap: bool,
    pub knn_k: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub mlp_learning_rate: f64,
    pub mlp_epochs: usize,
    pub nb_laplace_alpha: f64,
    pub nb_variance_floor: f64,
    pub svm_lambda: Vec<f64>,
    pub svm_epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            rf_trees: vec![2, 8, 14],
            rf_bootstrap: true,
            knn_k: vec![1, 3, 5, 7],
            mlp_hidden: vec![3, 5, 8, 10],
            mlp_learning_rate: 0.01,
            mlp_epochs: 500,
            nb_laplace_alpha: 1.0,
            nb_variance_floor: 1e-9,
            svm_lambda: vec![1e-4, 1e-3, 1e-2],
            svm_epochs: 100,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} must be non-empty and positive")));
        if self.rf_trees.is_empty() || self.rf_trees.contains(&0) {
            return bad("rf_trees");
        }
        if self.knn_k.is_empty() || self.knn_k.contains(&0) {
            return bad("knn_k");
        }
        if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) {
            return bad("mlp_hidden");
        }
        if self.svm_lambda.is_empty() || self.svm_lambda.iter().any(|l| !(*l > 0.0)) {
            return bad("svm_lambda");
        }
        if !(self.mlp_learning_rate > 0.0) || self.mlp_epochs == 0 {
            return bad("mlp_learning_rate / mlp_epochs");
        }
        if !(self.nb_laplace_alpha > 0.0) || !(self.nb_variance_floor > 0.0) {
            return bad("nb_laplace_alpha / nb_variance_floor");
        }
        if self.svm_epochs == 0 {
            return bad("svm_epochs");
        }
        Ok(())
    }

    pub fn forest(&self, n_trees: usize) -> ModelSpec {
        ModelSpec::RandomForest(ForestParams {
            n_trees,
            bootstrap: self.rf_bootstrap,
            ..ForestParams::default()
        })
    }

    /// Candidate specs for `kind`, in grid order.
    pub fn candidates(&self, kind: ClassifierKind) -> Vec<ModelSpec> {
        match kind {
            ClassifierKind::RandomForest => self.rf_trees.iter().map(|&n| self.forest(n)).collect(),
            ClassifierKind::Knn => self.knn_k.iter().map(|&k| ModelSpec::Knn { k }).collect(),
            ClassifierKind::NaiveBayes => vec![ModelSpec::NaiveBayes(NbParams {
                laplace_alpha: self.nb_laplace_alpha,
                variance_floor: self.nb_variance_floor,
            })],
            ClassifierKind::Mlp => self
                .mlp_hidden
                .iter()
                .map(|&hidden| {
                    ModelSpec::Mlp(MlpParams {
                        hidden,
                        learning_rate: self.mlp_learning_rate,
                        epochs: self.mlp_epochs,
                    })
                })
                .collect(),
            ClassifierKind::Svm => self
                .svm_lambda
                .iter()
                .map(|&lambda| {
                    ModelSpec::Svm(SvmParams {
                        lambda,
                        epochs: self.svm_epochs,
                    })
                })
                .collect(),
        }
    }
}

/// Rows, labels and the feature subset a model is trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub schema: FeatureSet,
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<String>,
}

impl TrainingData {
    pub fn new(schema: FeatureSet, rows: Vec<FeatureVector>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        Ok(TrainingData { schema, rows, labels })
    }

    /// Rows participating in `task`, with their task labels.
    pub fn from_lots(schema: FeatureSet, lots: &[LabeledLot], task: Task) -> Result<Self> {
        let (kept, labels) = task.select(lots)?;
        Self::new(schema, kept.iter().map(|l| l.features).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> TrainingData {
        TrainingData {
            schema: self.schema.clone(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        self.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fitted {
    RandomForest(Forest),
    Knn(Knn),
    NaiveBayes(NaiveBayes),
    Mlp(Mlp),
    Svm(LinearSvm),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    spec: ModelSpec,
    preprocessor: Preprocessor,
    /// Sorted; class indices refer to this list.
    labels: Vec<String>,
    fitted: Fitted,
}

fn encode(labels: &[String], classes: &[String]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label from class list"))
        .collect()
}

/// Fits `spec` on `data`. All randomness derives from `seed`.
pub fn fit(spec: &ModelSpec, data: &TrainingData, seed: u64) -> Result<TrainedModel> {
    let classes = data.classes();
    let n_classes = classes.len();
    let needs_two = !matches!(spec, ModelSpec::Knn { .. });
    if data.is_empty() || (needs_two && n_classes < 2) {
        return Err(Error::DegenerateTraining);
    }
    let y = encode(&data.labels, &classes);
    let pre = Preprocessor::fit(&data.schema, &data.rows);
    let fitted = match spec {
        ModelSpec::RandomForest(p) => {
            if p.n_trees == 0 {
                return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
            }
            Fitted::RandomForest(Forest::fit(&pre.design_matrix(&data.rows), &y, n_classes, p, seed))
        }
        ModelSpec::Knn { k } => {
            if *k == 0 || *k > data.len() {
                return Err(Error::InvalidParameter(format!(
                    "k = {k} must lie in 1..={}",
                    data.len()
                )));
            }
            Fitted::Knn(Knn::fit(pre.design_matrix(&data.rows), y, n_classes, *k))
        }
        ModelSpec::NaiveBayes(p) => {
            let x: Vec<Vec<f64>> = data.rows.iter().map(|r| pre.standardize(r)).collect();
            let zones: Option<Vec<usize>> = data
                .schema
                .has_zone()
                .then(|| data.rows.iter().map(|r| r.zone.index()).collect());
            Fitted::NaiveBayes(NaiveBayes::fit(&x, zones.as_deref(), &y, n_classes, p))
        }
        ModelSpec::Mlp(p) => Fitted::Mlp(Mlp::fit(&pre.design_matrix(&data.rows), &y, n_classes, p, seed)?),
        ModelSpec::Svm(p) => Fitted::Svm(LinearSvm::fit(&pre.design_matrix(&data.rows), &y, n_classes, p, seed)?),
    };
    Ok(TrainedModel {
        spec: *spec,
        preprocessor: pre,
        labels: classes,
        fitted,
    })
}

pub fn fit_random_forest(data: &TrainingData, params: ForestParams, seed: u64) -> Result<TrainedModel> {
    fit(&ModelSpec::RandomForest(params), data, seed)
}

pub fn fit_knn(data: &TrainingData, k: usize) -> Result<TrainedModel> {
    fit(&ModelSpec::Knn { k }, data, 0)
}

pub fn fit_naive_bayes(data: &TrainingData, params: NbParams) -> Result<TrainedModel> {
    fit(&ModelSpec::NaiveBayes(params), data, 0)
}

pub fn fit_mlp(data: &TrainingData, params: MlpParams, seed: u64) -> Result<TrainedModel> {
    fit(&ModelSpec::Mlp(params), data, seed)
}

pub fn fit_svm(data: &TrainingData, params: SvmParams, seed: u64) -> Result<TrainedModel> {
    fit(&ModelSpec::Svm(params), data, seed)
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        self.spec.kind()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn schema(&self) -> &FeatureSet {
        self.preprocessor.schema()
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        &self.preprocessor
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn fitted(&self) -> &Fitted {
        &self.fitted
    }

    fn predict_one(&self, row: &FeatureVector) -> usize {
        let pre = &self.preprocessor;
        match &self.fitted {
            Fitted::RandomForest(m) => m.predict(&pre.design(row)),
            Fitted::Knn(m) => m.predict(&pre.design(row)),
            Fitted::NaiveBayes(m) => m.predict(&pre.standardize(row), pre.zone(row)),
            Fitted::Mlp(m) => m.predict(&pre.design(row)),
            Fitted::Svm(m) => m.predict(&pre.design(row)),
        }
    }

    /// Class indices into [`TrainedModel::labels`].
    pub fn predict_indices(&self, rows: &[FeatureVector]) -> Vec<usize> {
        rows.par_iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn predict(&self, rows: &[FeatureVector]) -> Vec<String> {
        self.predict_indices(rows)
            .into_iter()
            .map(|c| self.labels[c].clone())
            .collect()
    }

    /// Predicts from already-encoded design rows (standardised numerics plus
    /// zone one-hot, as produced by the model's own preprocessor).
    pub fn predict_design(&self, rows: &[Vec<f64>]) -> Result<Vec<String>> {
        let width = self.preprocessor.width();
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::SchemaMismatch(format!(
                "row has {} columns, model expects {width}",
                bad.len()
            )));
        }
        let nw = self.preprocessor.numeric_width();
        let zone_of = |r: &[f64]| -> Option<usize> {
            self.schema()
                .has_zone()
                .then(|| r[nw..].iter().position(|&v| v == 1.0).unwrap_or(0))
        };
        Ok(rows
            .iter()
            .map(|r| {
                let c = match &self.fitted {
                    Fitted::RandomForest(m) => m.predict(r),
                    Fitted::Knn(m) => m.predict(r),
                    Fitted::NaiveBayes(m) => m.predict(&r[..nw], zone_of(r)),
                    Fitted::Mlp(m) => m.predict(r),
                    Fitted::Svm(m) => m.predict(r),
                };
                self.labels[c].clone()
            })
            .collect())
    }

    /// Naive Bayes class posteriors, in label order.
    pub fn posterior(&self, row: &FeatureVector) -> Option<Vec<f64>> {
        match &self.fitted {
            Fitted::NaiveBayes(m) => Some(m.posterior(&self.preprocessor.standardize(row), self.preprocessor.zone(row))),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Persistence

pub const MODEL_FORMAT: &str = "vacancy-model";
pub const MODEL_VERSION: u32 = 1;

/// Versioned on-disk container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub version: u32,
    pub task: Option<Task>,
    pub model: TrainedModel,
}

impl SavedModel {
    pub fn new(model: TrainedModel, task: Option<Task>) -> Self {
        SavedModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            task,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let format = probe.get("format").and_then(|v| v.as_str());
        let version = probe.get("version").and_then(|v| v.as_u64());
        if format != Some(MODEL_FORMAT) || version != Some(u64::from(MODEL_VERSION)) {
            return Err(Error::SchemaMismatch(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {format:?} v{version:?}"
            )));
        }
        Ok(serde_json::from_value(probe)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ZoneCategory;

    pub(crate) fn row(a: f64, b: f64) -> FeatureVector {
        FeatureVector {
            lib_dist: a,
            park_dist: b,
            school_dist: 0.0,
            transit_dist: 0.0,
            price_diff: 0.0,
            vacant_density: 0,
            crime_density: 0,
            zone: ZoneCategory::Residential,
        }
    }

    fn two_feature() -> FeatureSet {
        FeatureSet::parse("libDist+parkDist").unwrap()
    }

    fn toy() -> TrainingData {
        let rows = vec![row(0.0, 0.0), row(0.1, 0.2), row(3.0, 3.0), row(3.1, 2.9)];
        let labels = ["b", "b", "a", "a"].iter().map(|s| s.to_string()).collect();
        TrainingData::new(two_feature(), rows, labels).unwrap()
    }

    #[test]
    fn single_class_is_degenerate() {
        let mut d = toy();
        d.labels = vec!["a".into(); 4];
        for spec in [
            ModelSpec::RandomForest(ForestParams::default()),
            ModelSpec::NaiveBayes(NbParams::default()),
            ModelSpec::Svm(SvmParams::default()),
        ] {
            assert!(matches!(fit(&spec, &d, 0), Err(Error::DegenerateTraining)));
        }
    }

    #[test]
    fn knn_k_bounds() {
        assert!(fit_knn(&toy(), 5).is_err());
        assert!(fit_knn(&toy(), 0).is_err());
        assert!(fit_knn(&toy(), 4).is_ok());
    }

    #[test]
    fn empty_predict_and_label_closure() {
        let d = toy();
        for spec in Hyperparams::default()
            .candidates(ClassifierKind::ALL[0])
            .into_iter()
            .chain([
                ModelSpec::Knn { k: 1 },
                ModelSpec::NaiveBayes(NbParams::default()),
                ModelSpec::Mlp(MlpParams { epochs: 20, ..MlpParams::default() }),
                ModelSpec::Svm(SvmParams::default()),
            ])
        {
            let m = fit(&spec, &d, 9).unwrap();
            assert!(m.predict(&[]).is_empty());
            let p = m.predict(&d.rows);
            assert_eq!(p.len(), d.len());
            assert!(p.iter().all(|l| l == "a" || l == "b"));
            assert_eq!(m.predict(&d.rows), p);
        }
    }

    #[test]
    fn predict_design_checks_width() {
        let m = fit_knn(&toy(), 1).unwrap();
        assert!(matches!(m.predict_design(&[vec![0.0; 3]]), Err(Error::SchemaMismatch(_))));
        let design = m.preprocessor().design_matrix(&toy().rows);
        assert_eq!(m.predict_design(&design).unwrap(), m.predict(&toy().rows));
    }

    #[test]
    fn saved_model_rejects_foreign_format() {
        let m = fit_knn(&toy(), 1).unwrap();
        let json = SavedModel::new(m, Some(Task::Binary)).to_json().unwrap();
        let tampered = json.replace("vacancy-model", "other");
        assert!(matches!(SavedModel::from_json(&tampered), Err(Error::SchemaMismatch(_))));
        assert!(SavedModel::from_json(&json).is_ok());
    }

    #[test]
    fn grids_match_defaults() {
        let h = Hyperparams::default();
        let v: Vec<f64> = h.candidates(ClassifierKind::RandomForest).iter().map(ModelSpec::grid_value).collect();
        assert_eq!(v, vec![2.0, 8.0, 14.0]);
        let v: Vec<f64> = h.candidates(ClassifierKind::Mlp).iter().map(ModelSpec::grid_value).collect();
        assert_eq!(v, vec![3.0, 5.0, 8.0, 10.0]);
        assert_eq!(h.candidates(ClassifierKind::Knn).len(), 4);
        h.validate().unwrap();
        let bad = Hyperparams {
            knn_k: vec![],
            ..Hyperparams::default()
        };
        assert!(bad.validate().is_err());
    }
}
