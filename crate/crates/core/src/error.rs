use std::path::PathBuf;

use crate::field::Field;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension must be 1, 2 or 3, got {0}")]
    Dimension(usize),
    #[error("points per axis must be a power of two and at least 8, got {0}")]
    Points(usize),
    #[error("half width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("non-finite sample {value} at coordinate {coordinate:?}")]
    NonFiniteSample { coordinate: Vec<f64>, value: String },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite state detected at step {step} (t = {time})")]
    NonFiniteState {
        step: u64,
        time: f64,
        last_good: Box<Field>,
    },
    #[error("not enough snapshots: {0}")]
    InsufficientSnapshots(String),
    #[error("time {time} is not covered by the history [{start}, {end}]")]
    OutsideHistory { time: f64, start: f64, end: f64 },
    #[error("no admissible value on the search grid (best ratio {best_ratio:.6e})")]
    Unreachable { best_ratio: f64 },
    #[error("empty fit window [{lo}, {hi}] ({count} samples)")]
    EmptyWindow { lo: f64, hi: f64, count: usize },
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
