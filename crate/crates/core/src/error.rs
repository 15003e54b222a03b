use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("weights sum to zero")]
    AllZero,
    #[error("negative weight {weight} for model {model}")]
    NegativeWeight { model: String, weight: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("support of {support} models exceeds the declared universe of {universe}")]
    UniverseTooSmall { support: usize, universe: u64 },
    #[error("epsilon {0} outside (0, sqrt(2)]")]
    BadEpsilon(f64),
    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: &'static str, found: String },
    #[error("resampling fraction rho = {0} must be below 1")]
    RhoOverflow(f64),
    #[error("bag of {k} rows without replacement from {n} rows")]
    BagTooLarge { k: usize, n: usize },
    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },
    #[error("regularized normal matrix is singular")]
    SingularSystem,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("every grid point produced a null model")]
    AllDisqualified,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("bag {index}: {source}")]
    Bag {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("leave-one-out fold {index}: {source}")]
    Fold {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for malformed user input (configs, descriptors, files) as opposed
    /// to failures of the numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::SchemaMismatch(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::BadEpsilon(_)
            | Error::BagTooLarge { .. }
            | Error::RhoOverflow(_) => true,
            Error::Bag { source, .. } | Error::Fold { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
