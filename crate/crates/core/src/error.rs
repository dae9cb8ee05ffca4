use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Both expected accumulations are zero, so their ratio is undefined.
    #[error("degenerate demand: {0}")]
    DegenerateDemand(String),

    /// A ratio whose denominator vanishes for the given configuration.
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    /// Straight-going flow is zero, so lane assignment has nothing to act on.
    #[error("no common flow: lambda_nm = 0, assignment is meaningless")]
    NoCommonFlow,

    #[error("truncation bound n_max = {n_max} leaves tail mass {tail:e} (limit {limit:e})")]
    Truncation { n_max: usize, tail: f64, limit: f64 },

    #[error("infeasible observation: {0}")]
    InfeasibleObservation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used by the CLI for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "parameter",
            Error::DegenerateDemand(_) | Error::DegenerateConfiguration(_) | Error::NoCommonFlow => "degenerate",
            Error::Truncation { .. } => "truncation",
            Error::InfeasibleObservation(_) => "infeasible",
            Error::Config(_) => "config",
            Error::Io { .. } | Error::Csv { .. } => "io",
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
