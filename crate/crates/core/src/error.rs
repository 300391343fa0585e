use thiserror::Error;

/// Broad failure class, used for process exit codes and machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Solver => "solver",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Solver => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("impossible observation {observation} (marginal probability {probability:e})")]
    ImpossibleObservation {
        observation: usize,
        probability: f64,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("expectimax tree too large: {leaves} leaf evaluations exceed limit {limit}")]
    TreeTooLarge { leaves: u128, limit: u128 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parameter(_)
            | Error::Index(_)
            | Error::Config(_)
            | Error::Contract(_)
            | Error::Io { .. } => ErrorCategory::Config,
            Error::ImpossibleObservation { .. } | Error::Calibration(_) | Error::Data(_) => {
                ErrorCategory::Data
            }
            Error::NotConverged { .. } | Error::Solver(_) | Error::TreeTooLarge { .. } => {
                ErrorCategory::Solver
            }
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
