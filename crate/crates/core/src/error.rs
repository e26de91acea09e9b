use thiserror::Error;

use crate::vecchia::TraceEntry;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("no usable data: {0}")]
    EmptyData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid thinning number: {0}")]
    InvalidThinning(String),

    #[error("PACF undefined: {0}")]
    UndefinedPacf(String),

    #[error("block {block} has {size} points, needs at least {minimum}")]
    BlockTooSmall {
        block: usize,
        size: usize,
        minimum: usize,
    },

    #[error("numerical failure at point {index}: {reason}")]
    Numerical { index: usize, reason: String },

    #[error("optimizer diverged after {} iterations: {reason}", trace.len())]
    FitDiverged {
        reason: String,
        trace: Vec<TraceEntry>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model file error: {0}")]
    ModelFormat(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::InvalidThinning(_) => ErrorKind::Config,
            Error::Numerical { .. } | Error::FitDiverged { .. } => ErrorKind::Numerical,
            Error::Schema(_)
            | Error::EmptyData(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::UndefinedPacf(_)
            | Error::BlockTooSmall { .. }
            | Error::ModelFormat(_) => ErrorKind::Data,
        }
    }
}
