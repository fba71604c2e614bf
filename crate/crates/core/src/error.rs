use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration diverged at step {step}")]
    Diverged { step: usize },

    #[error("peak under-resolved: width spans {bins:.2} bins (need at least 3)")]
    UnderResolved { bins: f64 },

    #[error("spectrum has more than one peak above half maximum")]
    AmbiguousPeak,

    #[error("no peak above baseline")]
    NoPeak,

    #[error("normalization fault: occupancy {occupancy} is below -3 standard errors ({stderr})")]
    NormalizationFault { occupancy: f64, stderr: f64 },

    #[error("table is empty")]
    EmptyTable,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Diverged { .. } => "DIVERGED",
            Error::UnderResolved { .. } => "UNDER_RESOLVED",
            Error::AmbiguousPeak => "AMBIGUOUS_PEAK",
            Error::NoPeak => "NO_PEAK",
            Error::NormalizationFault { .. } => "NORMALIZATION_FAULT",
            Error::EmptyTable => "EMPTY_TABLE",
            Error::Io { .. } => "IO",
            Error::Json(_) => "JSON",
            Error::Csv(_) => "CSV",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
