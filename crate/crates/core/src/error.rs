use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chip profile: {field}: {reason}")]
    InvalidProfile { field: &'static str, reason: String },

    #[error("invalid write timings: {0}")]
    InvalidTimings(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("address {addr:#06x} out of range (capacity {capacity} words)")]
    AddressOutOfRange { addr: usize, capacity: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error(
        "allocation failed: requested {requested} words, {available} available in the {pool} pool"
    )]
    AllocationFailed {
        pool: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("page fault: virtual address {0:#x} is not mapped")]
    Unmapped(u64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn profile(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidProfile {
            field,
            reason: reason.into(),
        }
    }
}
