use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {field} at index {index}")]
    NonFiniteValue { field: &'static str, index: usize },

    #[error("inclusion probability {value} at index {index} is outside (0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("label indicator {value} at index {index} is not 0 or 1")]
    InvalidIndicator { index: usize, value: f64 },

    #[error("no labeled units")]
    NoLabeledUnits,

    #[error("need at least {needed} labeled units, found {found}")]
    InsufficientLabels { needed: usize, found: usize },

    #[error("response is constant; logistic fit needs both 0 and 1 outcomes")]
    DegenerateResponse,

    #[error("information matrix is numerically singular")]
    SingularInformation,

    #[error("population carries no predictions")]
    MissingPredictions,

    #[error("inclusion probability {value} at index {index} lies outside the bin edges")]
    BinCoverage { index: usize, value: f64 },

    #[error("fold {fold} holds {size} labeled units; at least {needed} required")]
    FoldTooSmall {
        fold: usize,
        size: usize,
        needed: usize,
    },

    #[error("labeled proportion {0} must lie in (0, 1]")]
    InvalidProportion(f64),

    #[error("problem has no known true value")]
    MissingTruth,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot read {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no rows left after dropping missing values")]
    EmptyAfterFiltering,

    #[error("trainer failed: {0}")]
    Trainer(String),
}
