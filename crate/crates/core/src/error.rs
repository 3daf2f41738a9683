use std::path::PathBuf;

/// Errors produced anywhere in the estimation/optimization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: missing column \"{column}\"")]
    MissingColumn { column: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("outlier filter removed every sample")]
    DegenerateFilter,

    #[error("unknown resolution label \"{0}\"")]
    UnknownResolution(String),

    #[error("dataset too small: {have} samples, need at least {need}")]
    TooSmall { have: usize, need: usize },

    #[error("feature \"{0}\" is constant on the fitting data")]
    DegenerateFeature(String),

    #[error("invalid value for {what}: {value}")]
    InvalidValue { what: String, value: f64 },

    #[error("unknown feature \"{0}\"")]
    UnknownFeature(String),

    #[error("unknown target \"{0}\"")]
    UnknownTarget(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("naive baseline has zero error; MASE is undefined")]
    UndefinedBaseline,

    #[error("index {index} out of range for feature \"{feature}\" (dimension {dim})")]
    IndexOutOfRange {
        feature: String,
        index: usize,
        dim: usize,
    },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("matrix is numerically rank deficient")]
    NumericalRank,

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("timing run {run} failed: {source}")]
    TimedRun {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short stable identifier for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::MissingColumn { .. } => "schema",
            Error::EmptyInput(_) => "empty_input",
            Error::DegenerateFilter => "degenerate_filter",
            Error::UnknownResolution(_) => "encoding",
            Error::TooSmall { .. } => "too_small",
            Error::DegenerateFeature(_) => "degenerate_feature",
            Error::InvalidValue { .. } => "invalid_value",
            Error::UnknownFeature(_) => "unknown_feature",
            Error::UnknownTarget(_) => "unknown_target",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::UndefinedBaseline => "undefined_baseline",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Diverged { .. } => "diverged",
            Error::NumericalRank => "numerical_rank",
            Error::TooLarge(_) => "too_large",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::TimedRun { .. } => "timed_run",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
