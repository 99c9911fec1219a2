use thiserror::Error;

/// Errors raised by the suitability engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate record for city `{city}` on {date}")]
    DuplicateKey { city: String, date: String },

    #[error("invalid date range: start {start} is after end {end}")]
    Range { start: String, end: String },

    #[error("city `{0}` has no observed aod values to interpolate from")]
    UnfillableSeries(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("k = {k} is infeasible for {rows} rows")]
    InfeasibleK { k: usize, rows: usize },

    #[error("silhouette is undefined for a single cluster")]
    UndefinedSilhouette,

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("classes {missing:?} are absent from the training split")]
    LabelCoverage { missing: Vec<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape error: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("background set is empty")]
    EmptyBackground,

    #[error("all feature importances are zero")]
    DegenerateImportance,

    #[error("unsupported bundle version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
