use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cp length {n} * {num}/{den} is not an integral sample count")]
    NonIntegralCp { n: usize, num: u32, den: u32 },

    #[error("invalid numerology: {0}")]
    InvalidNumerology(String),

    #[error("delay spread of {taps} taps exceeds the supported length {limit}")]
    DelaySpreadTooLong { taps: usize, limit: usize },

    #[error("invalid channel condition: {0}")]
    InvalidCondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate power estimate: desired power {0} is not positive")]
    DegenerateEstimate(f64),

    #[error("numerology index {index} outside 1..={size}")]
    BadIndex { index: usize, size: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("dataset file: {0}")]
    DatasetFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
