use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use vacancy_core::eval::{CvResult, EvaluationReport};
use vacancy_core::experiments::{self, ExperimentConfig, Protocol};
use vacancy_core::features::{self, read_features_csv, write_features_csv, ModelingDataset};
use vacancy_core::ingest::{self, CityLayers, RawLayers};
use vacancy_core::model::SavedModel;
use vacancy_core::synth::{self, SynthFile};
use vacancy_core::{ClassifierKind, Error, FeatureSet, InfraKind, ModelSpec, Task, QUARTER_MILE_M};

/// Vacant lot conversion modelling: feature extraction, training,
/// evaluation, prediction and the study protocols.
#[derive(Parser, Debug)]
#[command(name = "vacancy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the raw city layers and write the per-lot features CSV.
    BuildFeatures(BuildFeatures),
    /// Tune a classifier with k-fold CV on a training split and save it.
    Train(Train),
    /// Score a saved model against the labels in a features CSV.
    Evaluate(Evaluate),
    /// Write per-lot predictions (CSV, optionally GeoJSON).
    Predict(Predict),
    /// Run an experiment described by a TOML config.
    Experiment(Experiment),
    /// Generate synthetic cities described by a TOML config.
    Synth(Synth),
}

#[derive(Args, Debug)]
struct BuildFeatures {
    /// City name recorded in the dataset.
    #[arg(long)]
    city: String,
    /// Vacant lots CSV (id,lat,lon,status[,conversion]).
    #[arg(long)]
    lots: PathBuf,
    /// Libraries CSV (id,lat,lon).
    #[arg(long)]
    libraries: PathBuf,
    /// Parks CSV (id,lat,lon).
    #[arg(long)]
    parks: PathBuf,
    /// Schools CSV (id,lat,lon).
    #[arg(long)]
    schools: PathBuf,
    /// Transit stops CSV (id,lat,lon).
    #[arg(long)]
    transit: PathBuf,
    /// Crime incidents CSV (id,lat,lon,date).
    #[arg(long)]
    crime: PathBuf,
    /// Property assessments CSV (id,lat,lon,year,value), exactly two years.
    #[arg(long)]
    assessments: PathBuf,
    /// Zoning GeoJSON with a `category` property per feature.
    #[arg(long)]
    zoning: PathBuf,
    /// Year the crime incidents must fall in.
    #[arg(long, default_value_t = 2015)]
    crime_year: i32,
    /// Neighbourhood radius for densities and price means, metres.
    #[arg(long, default_value_t = QUARTER_MILE_M)]
    radius_m: f64,
    /// Output features CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Train {
    /// Features CSV produced by build-features.
    #[arg(long)]
    features: PathBuf,
    /// `binary` (adopt vs available) or `conversion` (conversion type).
    #[arg(long, value_parser = parse_task_kind)]
    task: TaskKind,
    /// Conversion mode: `converted_only` (3 classes) or `conversion_all`
    /// (adds available as a fourth class).
    #[arg(long, default_value = "converted_only")]
    mode: Task,
    /// One of rf, knn, nb, mlp, svm.
    #[arg(long)]
    classifier: ClassifierKind,
    /// Seed for the split, the folds and the fit.
    #[arg(long)]
    seed: u64,
    /// Where to write the serialized model (JSON).
    #[arg(long)]
    model_out: PathBuf,
    /// Training report path; defaults to the model path with a
    /// `.report.json` suffix.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the held-out validation rows as a features CSV.
    #[arg(long)]
    holdout_out: Option<PathBuf>,
    /// Feature subset such as `libDist+parkDist+zone`, or `all`.
    #[arg(long, default_value = "all")]
    feature_set: String,
    /// Share of rows in the training split.
    #[arg(long, default_value_t = 0.6)]
    train_fraction: f64,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// TOML file overriding the hyperparameter grids.
    #[arg(long)]
    hyperparams: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
enum TaskKind {
    Binary,
    Conversion,
}

fn parse_task_kind(s: &str) -> Result<TaskKind, String> {
    match s {
        "binary" => Ok(TaskKind::Binary),
        "conversion" => Ok(TaskKind::Conversion),
        other => Err(format!("unknown task `{other}` (expected binary or conversion)")),
    }
}

#[derive(Args, Debug)]
struct Evaluate {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output EvaluationReport JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Predict {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output CSV: id,lat,lon,predicted,observed.
    #[arg(long)]
    out: PathBuf,
    /// Also write a GeoJSON FeatureCollection next to the CSV.
    #[arg(long)]
    geojson: bool,
}

#[derive(Args, Debug)]
struct Experiment {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for every random choice; replaces any seed in the config.
    #[arg(long)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct Synth {
    /// Synth config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving one subdirectory per city.
    #[arg(long)]
    out: PathBuf,
}

/// Exit codes: 1 usage or config error, 2 data error, 3 runtime error.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }
}

fn code_of(e: &Error) -> u8 {
    if e.is_config_error() {
        1
    } else if e.is_data_error() {
        2
    } else {
        3
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_of(&e),
            message: e.to_string(),
        }
    }
}

fn context<T>(what: &str, r: vacancy_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure {
        code: code_of(&e),
        message: format!("{what}: {e}"),
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_file(path, text + "\n")
}

fn city_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "city".into())
}

fn load_features(path: &Path) -> Result<ModelingDataset, Failure> {
    context("features", read_features_csv(path, &city_name(path), QUARTER_MILE_M))
}

fn build_features(a: BuildFeatures) -> Result<(), Failure> {
    if !(a.radius_m > 0.0) {
        return Err(Failure::usage("--radius-m must be positive"));
    }
    let infra = |path: &Path, kind: InfraKind, name: &str| context(name, ingest::load_infrastructure(path, kind));
    let raw = RawLayers {
        lots: context("lots", ingest::load_lots(&a.lots))?,
        libraries: infra(&a.libraries, InfraKind::Library, "libraries")?,
        parks: infra(&a.parks, InfraKind::Park, "parks")?,
        schools: infra(&a.schools, InfraKind::School, "schools")?,
        transit: infra(&a.transit, InfraKind::TransitStop, "transit")?,
        crime: context("crime", ingest::load_crime(&a.crime, a.crime_year))?,
        assessments: context("assessments", ingest::load_assessments(&a.assessments))?,
        zoning: Some(context("zoning", ingest::load_zoning(&a.zoning))?),
    };
    let city = CityLayers::assemble(a.city.clone(), raw)?;
    let ds = features::build_dataset(&city, a.radius_m)?;
    write_features_csv(&a.out, &ds)?;
    println!("{}", city.counts());
    let n = ds.rows.len().max(1) as f64;
    println!(
        "price_flag: {} ({:.1}%)\nzone_flag: {} ({:.1}%)",
        ds.price_flagged(),
        100.0 * ds.price_flagged() as f64 / n,
        ds.zone_flagged(),
        100.0 * ds.zone_flagged() as f64 / n
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    classifier: ClassifierKind,
    task: Task,
    seed: u64,
    features: String,
    grid_param: &'static str,
    cv: Vec<CvResult>,
    chosen: ModelSpec,
    chosen_value: f64,
    n_train: usize,
    n_validation: usize,
    validation: EvaluationReport,
}

fn train(a: Train) -> Result<(), Failure> {
    let task = match a.task {
        TaskKind::Binary => Task::Binary,
        TaskKind::Conversion if a.mode == Task::Binary => {
            return Err(Failure::usage("--mode must be converted_only or conversion_all"))
        }
        TaskKind::Conversion => a.mode,
    };
    let schema = if a.feature_set == "all" {
        FeatureSet::all()
    } else {
        FeatureSet::parse(&a.feature_set).map_err(Failure::usage)?
    };
    let hyperparams = match &a.hyperparams {
        Some(p) => vacancy_core::config::load_toml(p)?,
        None => Default::default(),
    };
    let protocol = Protocol {
        schema: schema.clone(),
        train_fraction: a.train_fraction,
        stratified: true,
        folds: a.folds,
        hyperparams,
    };
    protocol.hyperparams.validate()?;

    let ds = load_features(&a.features)?;
    let (lots, labels) = task.select(&ds.rows)?;
    let data = vacancy_core::model::TrainingData::new(schema.clone(), lots.iter().map(|l| l.features).collect(), labels)?;
    let split = experiments::protocol_split(&data.labels, &protocol, a.seed)?;
    let (train_data, test_data) = (data.subset(&split.train), data.subset(&split.validation));
    let (model, grid) = experiments::tune_and_fit(&train_data, a.classifier, &protocol, a.seed)?;
    let validation = experiments::holdout_metrics(
        &model,
        &test_data,
        experiments::fit_seed(a.seed),
        &experiments::split_name(&protocol),
    )?;

    SavedModel::new(model, Some(task)).save(&a.model_out)?;
    let report = TrainReport {
        classifier: a.classifier,
        task,
        seed: a.seed,
        features: schema.to_string(),
        grid_param: a.classifier.grid_param(),
        chosen_value: grid.best.grid_value(),
        chosen: grid.best,
        cv: grid.results,
        n_train: train_data.len(),
        n_validation: test_data.len(),
        validation,
    };
    let report_path = a.report.unwrap_or_else(|| {
        let mut p = a.model_out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_json(&report_path, &report)?;

    if let Some(path) = &a.holdout_out {
        let holdout = ModelingDataset {
            city: ds.city.clone(),
            rows: split.validation.iter().map(|&i| lots[i].clone()).collect(),
            radius_m: ds.radius_m,
        };
        write_features_csv(path, &holdout)?;
    }

    println!("{} ({}):", a.classifier.display_name(), task);
    for r in &report.cv {
        println!(
            "  {} = {:<8} accuracy {:.4} (sd {:.4})",
            report.grid_param, r.param, r.mean_accuracy, r.accuracy_sd
        );
    }
    println!(
        "chosen {} = {}; validation accuracy {:.4}, macro F1 {:.4}",
        report.grid_param, report.chosen_value, report.validation.accuracy, report.validation.macro_f1
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(SavedModel, Task), Failure> {
    let saved = context("model", SavedModel::load(path))?;
    let task = saved.task.unwrap_or(Task::Binary);
    Ok((saved, task))
}

fn evaluate(a: Evaluate) -> Result<(), Failure> {
    let (saved, task) = load_model(&a.model)?;
    let ds = load_features(&a.features)?;
    let (lots, labels) = task.select(&ds.rows)?;
    let data = vacancy_core::model::TrainingData::new(
        saved.model.schema().clone(),
        lots.iter().map(|l| l.features).collect(),
        labels,
    )?;
    let mut report = experiments::holdout_metrics(&saved.model, &data, 0, "full file")?;
    report.metadata.seed = None;
    write_json(&a.out, &report)?;
    println!(
        "{} rows: accuracy {:.4}, macro P {:.4} / R {:.4} / F1 {:.4}",
        data.len(),
        report.accuracy,
        report.macro_precision,
        report.macro_recall,
        report.macro_f1
    );
    Ok(())
}

fn predict(a: Predict) -> Result<(), Failure> {
    let (saved, task) = load_model(&a.model)?;
    let ds = load_features(&a.features)?;
    let rows: Vec<_> = ds.rows.iter().map(|r| r.features).collect();
    let predicted = saved.model.predict(&rows);
    let observed: Vec<Option<String>> = ds
        .rows
        .iter()
        .map(|r| task.label(r).ok().flatten())
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure {
        code: 3,
        message: e.to_string(),
    };
    w.write_record(["id", "lat", "lon", "predicted", "observed"]).map_err(csv_err)?;
    for ((r, p), o) in ds.rows.iter().zip(&predicted).zip(&observed) {
        w.write_record([
            r.id.as_str(),
            &r.location.lat().to_string(),
            &r.location.lon().to_string(),
            p,
            o.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    write_file(&a.out, bytes)?;

    if a.geojson {
        let features: Vec<Value> = ds
            .rows
            .iter()
            .zip(&predicted)
            .zip(&observed)
            .map(|((r, p), o)| {
                let mut props = Map::new();
                props.insert("id".into(), json!(r.id));
                props.insert("predicted".into(), json!(p));
                if let Some(o) = o {
                    props.insert("observed".into(), json!(o));
                }
                features::point_feature(r.location, props)
            })
            .collect();
        let path = a.out.with_extension("geojson");
        write_json(&path, &json!({"type": "FeatureCollection", "features": features}))?;
    }
    println!("{} predictions written to {}", predicted.len(), a.out.display());
    Ok(())
}

fn experiment(a: Experiment) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&a.config, Some(a.seed))?;
    let run = || experiments::run_config(&cfg);
    let out = match a.threads {
        Some(0) => return Err(Failure::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure {
                code: 3,
                message: e.to_string(),
            })?
            .install(run)?,
        None => run()?,
    };
    experiments::write_output(&a.out, &out)?;
    print!("{}", experiments::summary_csv(&out));
    Ok(())
}

fn synth_cmd(a: Synth) -> Result<(), Failure> {
    let file = SynthFile::load(&a.config)?;
    for (cfg, g) in file.generate()? {
        let dir = a.out.join(&cfg.name);
        synth::write_generated(&dir, &g)?;
        println!("{}: {}", dir.display(), g.city.counts());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::BuildFeatures(a) => build_features(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Experiment(a) => experiment(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
