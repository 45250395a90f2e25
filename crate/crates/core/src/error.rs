use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph is disconnected: vertices {stranded:?} cannot be reached from vertex {from}")]
    Disconnected { from: usize, stranded: Vec<usize> },

    #[error("cluster copies overlap: {0}")]
    Overlap(String),

    #[error("eigensolver did not converge: worst residual {residual:e} exceeds {bound:e}")]
    Convergence { residual: f64, bound: f64 },

    #[error("moment overflows f64: ln M = {log_value}")]
    Overflow { log_value: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
