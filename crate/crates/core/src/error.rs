use std::path::PathBuf;

use crate::ingest::InfraKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("spatial index is empty")]
    EmptyLayer,

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}: line {line}: duplicate id `{id}`")]
    DuplicateId { path: PathBuf, line: u64, id: String },

    #[error("{path}: line {line}: coordinate out of range (lat {lat}, lon {lon})")]
    Range {
        path: PathBuf,
        line: u64,
        lat: f64,
        lon: f64,
    },

    #[error("{path}: schema error: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("unknown zoning category `{0}`")]
    UnknownCategory(String),

    #[error("missing layer: no {0} points")]
    MissingLayer(InfraKind),

    #[error("training data has a single class")]
    DegenerateTraining,

    #[error("loss became non-finite at epoch {epoch}; learning rate too high for the data scale")]
    NonFiniteLoss { epoch: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("class `{class}` has {count} rows; stratification needs at least {needed}")]
    TooFewPerClass {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("dataset carries no conversion labels for adopted lot `{0}`")]
    MissingConversionLabels(String),

    #[error("invalid transfer fractions: source {source_fraction}, target {target_fraction}")]
    InvalidFractions {
        source_fraction: f64,
        target_fraction: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by malformed or inconsistent input data, as opposed to
    /// configuration mistakes or numerical failures during fitting.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidCoordinate { .. }
                | Error::EmptyLayer
                | Error::Parse { .. }
                | Error::DuplicateId { .. }
                | Error::Range { .. }
                | Error::Schema { .. }
                | Error::UnknownCategory(_)
                | Error::MissingLayer(_)
                | Error::DegenerateTraining
                | Error::SchemaMismatch(_)
                | Error::TooFewPerClass { .. }
                | Error::EmptyMatrix
                | Error::MissingConversionLabels(_)
                | Error::Io { .. }
                | Error::Json(_)
        )
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidFractions { .. } | Error::InvalidParameter(_)
        )
    }
}
