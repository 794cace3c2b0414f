use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("gap of {missing} missing hours after line {line} exceeds the fill limit of {limit}")]
    Gap {
        line: usize,
        missing: usize,
        limit: usize,
    },

    #[error("line {line}: timestamps must be strictly increasing")]
    Ordering { line: usize },

    #[error("degenerate range: all training values equal {0}")]
    DegenerateRange(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("actual value {value} at index {index} is too close to zero for MAPE")]
    ZeroActual { index: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("invalid model state: {0}")]
    State(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
