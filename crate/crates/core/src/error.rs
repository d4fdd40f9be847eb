use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-integer count at row {row}, column {col}: {value}")]
    NonIntegerCount { row: usize, col: usize, value: f64 },

    #[error("binomial entry at row {row}, column {col} is {value}, which exceeds trials {trials} or is not an integer in range")]
    ExceedsTrials {
        row: usize,
        col: usize,
        value: f64,
        trials: u32,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate factor scores: H^T H is not positive definite")]
    DegenerateFactors,

    #[error("degenerate loadings: B^T diag(lambda)^-1 B is not positive definite")]
    DegenerateLoadings,

    #[error("rank-deficient fit")]
    RankDeficient,

    #[error("SVD failed: {0}")]
    Svd(String),

    #[error("zero loading matrix")]
    ZeroLoadings,

    #[error("Poisson mean overflow at row {row}, column {col} (exp({eta:.3}) > 1e12); use smaller signal strengths")]
    PoissonOverflow { row: usize, col: usize, eta: f64 },

    #[error("variance-to-mean ratio undefined: column mean is zero")]
    ZeroMean,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
