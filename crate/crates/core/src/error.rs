use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column `{column}`: {message}")]
    Malformed { line: usize, column: String, message: String },
    #[error("duplicate episode_id `{0}`")]
    DuplicateEpisode(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("feature `{0}` has no observed values; no mean exists for imputation")]
    NoObservedValues(String),
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate split: {0}; re-seed or use a stratified split")]
    DegenerateSplit(String),
    #[error("cannot weight a one-class problem")]
    OneClass,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("degenerate variance: curves identical or nearly so (variance {0:.3e})")]
    DegenerateVariance(f64),
    #[error("{0}")]
    InvalidInput(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("GRACE: {0}")]
    Grace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
