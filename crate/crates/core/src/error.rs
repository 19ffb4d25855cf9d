use std::path::PathBuf;

/// Unified error type for the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unreadable input stream: {0}")]
    Stream(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty project: a feature series needs at least one month")]
    EmptyProject,

    #[error("mixed feature forms: {0}")]
    MixedForms(String),

    #[error("expected normalized-form series, got raw")]
    RawFormInput,

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("feature count mismatch: expected {expected}, got {got}")]
    FeatureCountMismatch { expected: usize, got: usize },

    #[error("k-fold requires k >= 2, got {0}")]
    BadFoldCount(usize),

    #[error("no inflection: forecast series has no month-over-month drop")]
    NoInflection,

    #[error("empty post-downturn window")]
    EmptyPostWindow,

    #[error("router checkpoint missing")]
    RouterMissing,

    #[error("no forecaster for routed foundation {0}")]
    MissingForecaster(String),

    #[error("no graduated projects in the held-out split")]
    NoGraduatedProjects,

    #[error("checkpoint is not compatible: {0}")]
    Checkpoint(String),

    #[error("missing upstream artifact for stage {stage}: {path}")]
    MissingStage { stage: String, path: PathBuf },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
