use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("row {row}: duplicate key (lon={lon}, lat={lat}, month={month}, year={year})")]
    DuplicateKey {
        row: usize,
        lon: f64,
        lat: f64,
        month: u32,
        year: i32,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("too few exceedances: {found} < {required}")]
    TooFewExceedances { found: usize, required: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("burnt area {ba} exceeds cell capacity {capacity} (ratio {ratio})")]
    BapOutOfRange { ba: f64, capacity: f64, ratio: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("prediction row is not monotone at position {0}")]
    NonMonotone(usize),

    #[error("no truth value for index {0}")]
    MissingTruth(usize),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
