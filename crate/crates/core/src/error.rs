use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single unparseable row from an input CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: missing column `{0}`")]
    MissingColumn(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{failed} of {total} rows failed to parse (first: {first})")]
    TooManyRowErrors {
        failed: usize,
        total: usize,
        first: RowError,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("no consistent regions across years {0:?}")]
    NoConsistentRegions(Vec<i32>),

    #[error("year {0} not present in table")]
    YearAbsent(i32),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("occupation label mismatch: only in first: {only_a:?}; only in second: {only_b:?}")]
    LabelMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("zero variance: values are constant")]
    ZeroVariance,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
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

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
