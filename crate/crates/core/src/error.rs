use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("feature `{0}` has zero variance")]
    DegenerateFeature(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value in {path}: {message}")]
    Numerical { path: String, message: String },
    #[error("loss is undefined: {0}")]
    UndefinedLoss(String),
    #[error("cannot estimate {0}")]
    Estimation(String),
    #[error("Cox fit did not converge within {iterations} iterations")]
    Convergence { iterations: usize },
    #[error("monotone likelihood: coefficient {covariate} diverges (perfect separation)")]
    MonotoneLikelihood { covariate: usize },
    #[error("bootstrap unreliable: {degenerate} of {total} resamples were degenerate")]
    Reliability { degenerate: usize, total: usize },
    #[error("models are not nested: full log-likelihood {full} < reduced {reduced}")]
    NestingViolation { full: f64, reduced: f64 },
    #[error("fold {fold} is degenerate: {message}")]
    FoldDegenerate { fold: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
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

    pub(crate) fn parse(row: usize, column: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }
}
