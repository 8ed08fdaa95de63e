//! Vacant lot conversion modelling.
//!
//! The pipeline runs in five stages:
//!
//! * [`ingest`] loads the raw city layers (lots, infrastructure, crime,
//!   property assessments, zoning) from local CSV/GeoJSON files,
//! * [`features`] turns every lot into an eight-determinant [`FeatureVector`],
//! * [`model`] fits one of five classifiers behind a shared predict contract,
//! * [`eval`] provides splits, cross-validation, grid search and metrics,
//! * [`experiments`] wires those together into the within-city,
//!   conversion-type, feature-subset and cross-city protocols.
//!
//! [`synth`] generates seeded synthetic cities with planted labelling rules so
//! every protocol can be exercised without municipal data.

pub mod config;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, CvResult, EvaluationReport, SplitSpec};
pub use features::{Feature, FeatureSet, FeatureVector, LabeledLot, ModelingDataset, Task};
pub use geo::{GeoPoint, GeoPolygon, PointIndex, QUARTER_MILE_M};
pub use ingest::{CityLayers, ConversionType, InfraKind, LotStatus, ZoneCategory};
pub use model::{ClassifierKind, Hyperparams, ModelSpec, TrainedModel};
