use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed pcap: {0}")]
    Pcap(String),

    #[error("packet {index} is out of order ({timestamp_us} us < {previous_us} us)")]
    OutOfOrder {
        index: u64,
        timestamp_us: u64,
        previous_us: u64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("flow length {length} does not fit below the last bin boundary {last_boundary}")]
    BinOverflow { length: u64, last_boundary: u64 },

    #[error("bin mismatch: {0}")]
    BinMismatch(String),

    #[error("normalizer C = {0} is not positive; observed distribution is corrupt")]
    NonPositiveNormalizer(f64),

    #[error("sampling target unattainable: {0}")]
    Unattainable(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
