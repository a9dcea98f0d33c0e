use thiserror::Error;

/// Errors produced anywhere in the forecasting workflow.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid plant: {0}")]
    InvalidPlant(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid estimator spec: {0}")]
    InvalidSpec(String),
    #[error("search failed: every one of {} trials failed (first cause: {})", causes.len(), causes.first().map(String::as_str).unwrap_or("none"))]
    SearchFailed { causes: Vec<String> },
    #[error("invalid ensemble pool: {0}")]
    InvalidPool(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("missing model bundle: {0}")]
    MissingBundle(String),
    #[error("serialization: {0}")]
    Serialization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short category label used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidSeries(_)
            | Error::InvalidPlant(_)
            | Error::InvalidData(_)
            | Error::Shape { .. }
            | Error::Domain(_) => "input",
            Error::DegenerateData(_) | Error::InsufficientData(_) => "data",
            Error::InvalidSpec(_) | Error::InvalidPool(_) | Error::InvalidConfig(_) => "config",
            Error::SearchFailed { .. } => "training",
            Error::Unsupported(_) => "unsupported",
            Error::UndefinedMetric(_) => "metric",
            Error::MissingBundle(_) => "missing-artifact",
            Error::Serialization(_) | Error::Json(_) | Error::Csv(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
