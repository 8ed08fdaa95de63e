//! The four study protocols: feature subsets, within-city lot selection,
//! conversion-type prediction and cross-city transfer.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{Error, Result};
use crate::eval::{self, compute_metrics, ConfusionMatrix, CvResult, EvaluationReport, GridSearch, ReportMetadata, SplitSpec};
use crate::features::{read_features_csv, build_dataset, Feature, FeatureSet, ModelingDataset, Task};
use crate::geo::QUARTER_MILE_M;
use crate::ingest::load_city_dir;
use crate::model::{fit, ClassifierKind, ForestParams, Hyperparams, ModelSpec, TrainedModel, TrainingData};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub schema: FeatureSet,
    pub train_fraction: f64,
    pub stratified: bool,
    pub folds: usize,
    pub hyperparams: Hyperparams,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            schema: FeatureSet::all(),
            train_fraction: 0.6,
            stratified: true,
            folds: 5,
            hyperparams: Hyperparams::default(),
        }
    }
}

/// Tuned model, its cross-validation table and the hold-out report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub classifier: ClassifierKind,
    pub chosen: ModelSpec,
    pub cv: Vec<CvResult>,
    pub report: EvaluationReport,
}

/// Metrics of `model` on `test`. Classes are the model's labels plus any
/// label only seen in `test`.
pub fn holdout_metrics(model: &TrainedModel, test: &TrainingData, seed: u64, split: &str) -> Result<EvaluationReport> {
    let predicted = model.predict(&test.rows);
    let mut classes = model.labels().to_vec();
    classes.extend(test.labels.iter().cloned());
    classes.sort();
    classes.dedup();
    let cm = ConfusionMatrix::from_labels_with(classes, &test.labels, &predicted);
    let mut report = compute_metrics(&cm)?;
    report.metadata = ReportMetadata {
        model: Some(model.kind().short().to_string()),
        params: Some(*model.spec()),
        seed: Some(seed),
        split: Some(split.to_string()),
    };
    Ok(report)
}

fn holdout_report(spec: &ModelSpec, train: &TrainingData, test: &TrainingData, seed: u64, split: &str) -> Result<EvaluationReport> {
    holdout_metrics(&fit(spec, train, seed)?, test, seed, split)
}

/// Grid search with k-fold CV on `train`, then a refit of the best candidate
/// on all of `train`.
pub fn tune_and_fit(
    train: &TrainingData,
    kind: ClassifierKind,
    protocol: &Protocol,
    seed: u64,
) -> Result<(TrainedModel, GridSearch)> {
    let candidates = protocol.hyperparams.candidates(kind);
    let grid = eval::grid_search(train, &candidates, protocol.folds, seed::derive(seed, "cv"))?;
    let model = fit(&grid.best, train, fit_seed(seed))?;
    Ok((model, grid))
}

pub fn fit_seed(seed: u64) -> u64 {
    seed::derive(seed, "fit")
}

/// [`tune_and_fit`] on `train`, metrics on `test`.
pub fn evaluate_holdout(
    train: &TrainingData,
    test: &TrainingData,
    kind: ClassifierKind,
    protocol: &Protocol,
    seed: u64,
    split: &str,
) -> Result<ClassifierReport> {
    let (model, grid) = tune_and_fit(train, kind, protocol, seed)?;
    let report = holdout_metrics(&model, test, fit_seed(seed), split)?;
    Ok(ClassifierReport {
        classifier: kind,
        chosen: grid.best,
        cv: grid.results,
        report,
    })
}

/// Train/validation row indices of the protocol's split.
pub fn protocol_split(labels: &[String], protocol: &Protocol, seed: u64) -> Result<eval::Split> {
    eval::stratified_split(
        labels,
        &SplitSpec {
            train_fraction: protocol.train_fraction,
            stratified: protocol.stratified,
            seed: seed::derive(seed, "split"),
        },
    )
}

fn split_data(data: &TrainingData, protocol: &Protocol, seed: u64) -> Result<(TrainingData, TrainingData)> {
    let s = protocol_split(&data.labels, protocol, seed)?;
    Ok((data.subset(&s.train), data.subset(&s.validation)))
}

pub fn split_name(protocol: &Protocol) -> String {
    let t = (protocol.train_fraction * 100.0).round();
    format!("{t}/{} {}", 100.0 - t, if protocol.stratified { "stratified" } else { "random" })
}

/// The three determinant groups compared with a fixed 8-tree forest.
pub fn feature_subsets() -> [FeatureSet; 3] {
    let set = |fs: &[Feature]| FeatureSet::new(fs.iter().copied()).expect("non-empty");
    [
        set(&[Feature::LibDist, Feature::ParkDist, Feature::SchoolDist]),
        set(&[Feature::TransitDist, Feature::Zone]),
        set(&[Feature::VacantDensity, Feature::CrimeDensity]),
    ]
}

pub fn run_feature_subsets(ds: &ModelingDataset, protocol: &Protocol, seed: u64) -> Result<Vec<(FeatureSet, EvaluationReport)>> {
    let spec = ModelSpec::RandomForest(ForestParams {
        n_trees: 8,
        bootstrap: protocol.hyperparams.rf_bootstrap,
        ..ForestParams::default()
    });
    let full = TrainingData::from_lots(FeatureSet::all(), &ds.rows, Task::Binary)?;
    let (train, test) = split_data(&full, protocol, seed)?;
    feature_subsets()
        .into_par_iter()
        .map(|schema| {
            let with = |d: &TrainingData| TrainingData {
                schema: schema.clone(),
                ..d.clone()
            };
            let report = holdout_report(&spec, &with(&train), &with(&test), fit_seed(seed), &split_name(protocol))?;
            Ok((schema, report))
        })
        .collect()
}

/// Train/validation split of one city, then [`evaluate_holdout`] per classifier.
pub fn run_within_city(
    ds: &ModelingDataset,
    task: Task,
    classifiers: &[ClassifierKind],
    protocol: &Protocol,
    seed: u64,
) -> Result<Vec<ClassifierReport>> {
    let data = TrainingData::from_lots(protocol.schema.clone(), &ds.rows, task)?;
    let (train, test) = split_data(&data, protocol, seed)?;
    let name = split_name(protocol);
    classifiers
        .par_iter()
        .map(|&k| evaluate_holdout(&train, &test, k, protocol, seed, &name))
        .collect()
}

pub fn run_within_city_binary(
    ds: &ModelingDataset,
    classifiers: &[ClassifierKind],
    protocol: &Protocol,
    seed: u64,
) -> Result<Vec<ClassifierReport>> {
    run_within_city(ds, Task::Binary, classifiers, protocol, seed)
}

pub fn run_conversion_type(
    ds: &ModelingDataset,
    classifiers: &[ClassifierKind],
    protocol: &Protocol,
    seed: u64,
    mode: Task,
) -> Result<Vec<ClassifierReport>> {
    if mode == Task::Binary {
        return Err(Error::InvalidParameter("conversion mode must be converted_only or conversion_all".into()));
    }
    if !ds.has_conversion() {
        return Err(Error::MissingConversionLabels(ds.city.clone()));
    }
    run_within_city(ds, mode, classifiers, protocol, seed)
}

/// Exactly one fraction must be 1 and the other in [0, 1). The city with the
/// smaller fraction is evaluated on its held-out remainder.
pub fn check_fractions(source_fraction: f64, target_fraction: f64) -> Result<()> {
    let ok = |f: f64| (0.0..=1.0).contains(&f);
    let valid = ok(source_fraction)
        && ok(target_fraction)
        && (source_fraction == 1.0) != (target_fraction == 1.0);
    if valid {
        Ok(())
    } else {
        Err(Error::InvalidFractions {
            source_fraction,
            target_fraction,
        })
    }
}

fn percent(f: f64) -> String {
    let p = (f * 1000.0).round() / 10.0;
    if p.fract() == 0.0 {
        format!("{p:.0}%")
    } else {
        format!("{p}%")
    }
}

pub fn transfer_label(source: &str, source_fraction: f64, target: &str, target_fraction: f64) -> String {
    format!(
        "{source}: {} / {target}: {}",
        percent(source_fraction),
        percent(target_fraction)
    )
}

/// Row indices of a cross-city run. Each city's `train` rows go into the
/// training set; the `validation` rows of the evaluated city form the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSplit {
    pub source: eval::Split,
    pub target: eval::Split,
    pub evaluate_source: bool,
}

pub fn transfer_split(
    source_labels: &[String],
    target_labels: &[String],
    seed: u64,
    source_fraction: f64,
    target_fraction: f64,
) -> Result<TransferSplit> {
    check_fractions(source_fraction, target_fraction)?;
    Ok(TransferSplit {
        source: eval::take_fraction(source_labels, source_fraction, seed::derive(seed, "source"))?,
        target: eval::take_fraction(target_labels, target_fraction, seed::derive(seed, "target"))?,
        evaluate_source: source_fraction < 1.0,
    })
}

/// Trains on `source_fraction` of `source` plus `target_fraction` of `target`
/// (binary labels) and evaluates on the rest of whichever city was only
/// partly used.
pub fn run_cross_city(
    source: &ModelingDataset,
    target: &ModelingDataset,
    classifiers: &[ClassifierKind],
    protocol: &Protocol,
    seed: u64,
    source_fraction: f64,
    target_fraction: f64,
) -> Result<Vec<ClassifierReport>> {
    let src = TrainingData::from_lots(protocol.schema.clone(), &source.rows, Task::Binary)?;
    let tgt = TrainingData::from_lots(protocol.schema.clone(), &target.rows, Task::Binary)?;
    let parts = transfer_split(&src.labels, &tgt.labels, seed, source_fraction, target_fraction)?;

    let mut train = src.subset(&parts.source.train);
    let extra = tgt.subset(&parts.target.train);
    train.rows.extend(extra.rows);
    train.labels.extend(extra.labels);
    let test = if parts.evaluate_source {
        src.subset(&parts.source.validation)
    } else {
        tgt.subset(&parts.target.validation)
    };
    let name = transfer_label(&source.city, source_fraction, &target.city, target_fraction);
    classifiers
        .par_iter()
        .map(|&k| evaluate_holdout(&train, &test, k, protocol, seed, &name))
        .collect()
}

// ---------------------------------------------------------------------------
// Configured runs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FeatureSubsets,
    WithinCityBinary,
    ConversionType,
    CrossCity,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::FeatureSubsets => "feature_subsets",
            ExperimentKind::WithinCityBinary => "within_city_binary",
            ExperimentKind::ConversionType => "conversion_type",
            ExperimentKind::CrossCity => "cross_city",
        }
    }
}

/// A city given either as a directory of raw layers or a features CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityInput {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_crime_year")]
    pub crime_year: i32,
}

fn default_crime_year() -> i32 {
    2015
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    pub cities: Vec<CityInput>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default = "default_features")]
    pub features: String,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_mode")]
    pub mode: Task,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
    /// `[source_fraction, target_fraction]` pairs for cross-city runs.
    #[serde(default)]
    pub fractions: Vec<[f64; 2]>,
    #[serde(default)]
    pub hyperparams: Hyperparams,
}

fn default_classifiers() -> Vec<ClassifierKind> {
    vec![ClassifierKind::RandomForest, ClassifierKind::Knn]
}
fn default_features() -> String {
    "all".into()
}
fn default_train_fraction() -> f64 {
    0.6
}
fn default_true() -> bool {
    true
}
fn default_folds() -> usize {
    5
}
fn default_mode() -> Task {
    Task::ConvertedOnly
}
fn default_radius() -> f64 {
    QUARTER_MILE_M
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = config::from_toml_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates; relative city paths resolve against the config
    /// file's directory. `seed`, when given, replaces the file's seed.
    pub fn load(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = config::load_toml(path)?;
        for c in &mut cfg.cities {
            c.path = config::resolve(path, &c.path);
        }
        if seed.is_some() {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seed.is_none() {
            return bad("`seed` is required".into());
        }
        if self.cities.is_empty() {
            return bad("at least one city is required".into());
        }
        if self.classifiers.is_empty() {
            return bad("classifier list is empty".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if self.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if !(self.radius_m > 0.0) {
            return bad("radius_m must be positive".into());
        }
        self.protocol()?;
        self.hyperparams.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.kind {
            ExperimentKind::CrossCity => {
                if self.cities.len() != 2 || self.cities[0].name == self.cities[1].name {
                    return bad("cross_city needs exactly two distinct cities (source, target)".into());
                }
                if self.fractions.is_empty() {
                    return bad("cross_city needs at least one fractions pair".into());
                }
                for &[s, t] in &self.fractions {
                    check_fractions(s, t)?;
                }
            }
            ExperimentKind::ConversionType if self.mode == Task::Binary => {
                return bad("mode must be converted_only or conversion_all".into());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn protocol(&self) -> Result<Protocol> {
        let schema = if self.features == "all" {
            FeatureSet::all()
        } else {
            FeatureSet::parse(&self.features).map_err(|e| Error::Config(e.to_string()))?
        };
        Ok(Protocol {
            schema,
            train_fraction: self.train_fraction,
            stratified: self.stratified,
            folds: self.folds,
            hyperparams: self.hyperparams.clone(),
        })
    }
}

/// Builds (or reads) the modelling dataset for a configured city.
pub fn load_dataset(input: &CityInput, radius_m: f64) -> Result<ModelingDataset> {
    if input.path.is_dir() {
        let city = load_city_dir(&input.path, &input.name, input.crime_year)?;
        build_dataset(&city, radius_m)
    } else {
        read_features_csv(&input.path, &input.name, radius_m)
    }
}

/// One (configuration, classifier) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub experiment: ExperimentKind,
    pub label: String,
    pub classifier: ClassifierKind,
    pub chosen: Option<ModelSpec>,
    pub cv: Vec<CvResult>,
    /// Classes listed in the summary in addition to the macro row.
    pub highlight: Vec<String>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub cells: Vec<Cell>,
}

fn highlight(task: Task, report: &EvaluationReport) -> Vec<String> {
    match task.positive_class() {
        Some(p) => vec![p.to_string()],
        None => report.per_class.iter().map(|c| c.class.clone()).collect(),
    }
}

fn cells_from(kind: ExperimentKind, label: &str, task: Task, reports: Vec<ClassifierReport>) -> Vec<Cell> {
    reports
        .into_iter()
        .map(|r| Cell {
            experiment: kind,
            label: label.to_string(),
            classifier: r.classifier,
            chosen: Some(r.chosen),
            cv: r.cv,
            highlight: highlight(task, &r.report),
            report: r.report,
        })
        .collect()
}

/// Runs a validated config on already-loaded datasets (one per configured
/// city, same order). Cells come back in declaration order.
pub fn run_experiment(cfg: &ExperimentConfig, datasets: &[ModelingDataset]) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let seed = cfg.seed.expect("validated");
    let protocol = cfg.protocol()?;
    let kind = cfg.kind;
    let nested: Vec<Vec<Cell>> = match kind {
        ExperimentKind::FeatureSubsets => datasets
            .par_iter()
            .map(|ds| {
                Ok(run_feature_subsets(ds, &protocol, seed)?
                    .into_iter()
                    .map(|(schema, report)| Cell {
                        experiment: kind,
                        label: format!("{}: {schema}", ds.city),
                        classifier: ClassifierKind::RandomForest,
                        chosen: None,
                        cv: vec![],
                        highlight: highlight(Task::Binary, &report),
                        report,
                    })
                    .collect())
            })
            .collect::<Result<_>>()?,
        ExperimentKind::WithinCityBinary => datasets
            .par_iter()
            .map(|ds| {
                let r = run_within_city_binary(ds, &cfg.classifiers, &protocol, seed)?;
                Ok(cells_from(kind, &ds.city, Task::Binary, r))
            })
            .collect::<Result<_>>()?,
        ExperimentKind::ConversionType => datasets
            .par_iter()
            .map(|ds| {
                let r = run_conversion_type(ds, &cfg.classifiers, &protocol, seed, cfg.mode)?;
                Ok(cells_from(kind, &format!("{} ({})", ds.city, cfg.mode), cfg.mode, r))
            })
            .collect::<Result<_>>()?,
        ExperimentKind::CrossCity => {
            let (source, target) = (&datasets[0], &datasets[1]);
            cfg.fractions
                .par_iter()
                .map(|&[sf, tf]| {
                    let r = run_cross_city(source, target, &cfg.classifiers, &protocol, seed, sf, tf)?;
                    let label = transfer_label(&source.city, sf, &target.city, tf);
                    Ok(cells_from(kind, &label, Task::Binary, r))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(ExperimentOutput {
        kind,
        seed,
        cells: nested.into_iter().flatten().collect(),
    })
}

/// Loads every configured city and runs the experiment.
pub fn run_config(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let datasets = cfg
        .cities
        .par_iter()
        .map(|c| load_dataset(c, cfg.radius_m))
        .collect::<Result<Vec<_>>>()?;
    run_experiment(cfg, &datasets)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Summary table: one row per highlighted class plus a macro row per cell,
/// figures to four decimals.
pub fn summary_csv(out: &ExperimentOutput) -> String {
    let mut s = String::from("experiment,cell,classifier,param,class,precision,recall,f1,support,accuracy\n");
    for cell in &out.cells {
        let param = cell
            .chosen
            .map(|c| format!("{}={}", c.kind().grid_param(), c.grid_value()))
            .unwrap_or_default();
        let r = &cell.report;
        let prefix = format!(
            "{},{},{},{}",
            cell.experiment.as_str(),
            csv_field(&cell.label),
            cell.classifier.short(),
            csv_field(&param)
        );
        for class in &cell.highlight {
            if let Some(m) = r.class(class) {
                let _ = writeln!(
                    s,
                    "{prefix},{},{:.4},{:.4},{:.4},{},{:.4}",
                    csv_field(class),
                    m.precision,
                    m.recall,
                    m.f1,
                    m.support,
                    r.accuracy
                );
            }
        }
        let _ = writeln!(
            s,
            "{prefix},macro,{:.4},{:.4},{:.4},{},{:.4}",
            r.macro_precision,
            r.macro_recall,
            r.macro_f1,
            r.confusion.total(),
            r.accuracy
        );
    }
    s
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

/// Writes `summary.csv` and one JSON file per cell into `dir`.
pub fn write_output(dir: impl AsRef<Path>, out: &ExperimentOutput) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, cell) in out.cells.iter().enumerate() {
        let path = dir.join(format!("{:02}-{}-{}.json", i + 1, slug(&cell.label), cell.classifier.short()));
        let json = serde_json::to_string_pretty(cell)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("summary.csv");
    fs::write(&path, summary_csv(out)).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_rules() {
        assert!(check_fractions(1.0, 0.25).is_ok());
        assert!(check_fractions(0.2, 1.0).is_ok());
        assert!(check_fractions(1.0, 0.0).is_ok());
        for (s, t) in [(1.0, 1.0), (0.5, 0.5), (1.2, 1.0), (1.0, -0.1)] {
            assert!(matches!(check_fractions(s, t), Err(Error::InvalidFractions { .. })));
        }
    }

    #[test]
    fn labels_name_both_fractions() {
        assert_eq!(
            transfer_label("Baltimore", 1.0, "Philadelphia", 0.25),
            "Baltimore: 100% / Philadelphia: 25%"
        );
        assert_eq!(percent(0.125), "12.5%");
        assert_eq!(slug("Baltimore: 100% / Philadelphia: 25%"), "baltimore-100-philadelphia-25");
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            kind = "cross_city"
            seed = 7
            classifiers = ["rf", "knn"]
            fractions = [[1.0, 0.25]]

            [[cities]]
            name = "A"
            path = "a"

            [[cities]]
            name = "B"
            path = "b.csv"

            [hyperparams]
            rf_trees = [2, 8]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.hyperparams.rf_trees, vec![2, 8]);
        assert_eq!(cfg.folds, 5);
        let missing_seed = text.replace("seed = 7", "");
        assert!(matches!(ExperimentConfig::from_toml(&missing_seed), Err(Error::Config(_))));
        let same_city = text.replace("name = \"B\"", "name = \"A\"");
        assert!(ExperimentConfig::from_toml(&same_city).is_err());
        let unknown = format!("{text}\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
    }
}
