use std::io;
use std::path::PathBuf;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("invalid dimensions {width}x{height}: {reason}")]
    InvalidDimensions { width: usize, height: usize, reason: &'static str },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("truncated data: {0}")]
    Truncated(String),
    #[error("corrupt bitstream: {0}")]
    Corrupt(String),
    #[error("qp {0} outside 1..=51")]
    InvalidQp(i32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("negative weight {0} in weight map")]
    NegativeWeight(f64),
    #[error("empty accumulator")]
    EmptyAccumulator,
    #[error("macroblock metadata does not cover the frame: {0}")]
    CoverageGap(String),
    #[error("fingerprint {0:?} not found")]
    NotFound(String),
    #[error("fingerprint {0:?} already exists")]
    Duplicate(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
