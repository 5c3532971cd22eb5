use crate::noise::DifferenceTable;
use crate::solvers::IterationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// No pair of consecutive difference-table columns agreed; the table is
    /// attached for inspection.
    #[error("noise estimation failed: no stable column in a {}-point difference table", .table.values.len())]
    EstimationFailed { table: Box<DifferenceTable> },

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("oracle failure: {0}")]
    Oracle(String),

    /// Non-finite objective or gradient. `trace` holds every record produced
    /// before the failure.
    #[error("solver diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        trace: Vec<IterationRecord>,
    },

    #[error("stationarity measure is not positive; gamma_k is undefined at a stationary point")]
    AtStationaryPoint,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::InvalidConfig(_) | Error::Parse { .. }
        )
    }
}
