use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: timestamp {timestamp} is earlier than the previous record")]
    Ordering { line: usize, timestamp: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series of {len} points is too short to split with minimum segment length {min_len}")]
    TooShortToSplit { len: usize, min_len: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("return period below one event interval (T*N = {0})")]
    ReturnPeriodTooShort(f64),

    #[error("no bracket: mixture return level for T = {period} years exceeds {upper} m/s")]
    NoBracket { period: f64, upper: f64 },

    #[error("model artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of an iterative numeric routine, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonConvergence(_) | Error::NoBracket { .. })
    }
}
