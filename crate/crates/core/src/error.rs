use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("corpus has no timestamps; temporal split requires the timestamped format")]
    MissingTimestamps,

    #[error("embedding matrices need {needed} bytes, above the {cap}-byte memory cap")]
    MemoryCap { needed: u64, cap: u64 },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("no test pairs left to evaluate")]
    NoEvalPairs,

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("cost model fit is singular: {0}; add probe configurations that vary d, L and N")]
    SingularFit(String),

    #[error("sobol dimension {requested} exceeds the {available} available direction-number sets")]
    SobolDimension { requested: usize, available: usize },

    #[error("gaussian process fit failed: {0}")]
    GpFit(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input (arguments, files, configs) rather
    /// than failures while doing the work.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::EmptyCorpus
            | Error::EmptyTestSet
            | Error::MissingTimestamps
            | Error::MemoryCap { .. }
            | Error::VocabMismatch(_)
            | Error::ConfigMismatch(_)
            | Error::SobolDimension { .. }
            | Error::Toml(_) => true,
            _ => false,
        }
    }
}
