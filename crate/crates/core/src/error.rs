use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} lies outside [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("relative error is undefined for a benchmark that vanishes on the grid")]
    UndefinedRelativeError,

    #[error("tolerance-based stopping requires a benchmark curve")]
    MissingBenchmark,

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed curve file: {0}")]
    CurveFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
