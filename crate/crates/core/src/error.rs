//! Error type shared by every measurement module.

use std::path::PathBuf;

/// Errors raised by geometry construction, trace I/O, model evaluation and
/// the locality statistics.
#[derive(Debug, thiserror::Error)]
pub enum LocalityError {
    /// A task instance (maze, grid, scene) violates its own invariants.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A numeric or structural parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// ARC grid without any foreground cell.
    #[error("grid has no foreground cells")]
    NoForeground,

    /// A value failed validation before being written or after being read.
    #[error("validation error: {0}")]
    Validation(String),

    /// A tensor or matrix does not have the expected shape.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checksum mismatch for {file}: manifest {expected:08x}, payload {actual:08x}")]
    Checksum {
        file: String,
        expected: u32,
        actual: u32,
    },

    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),

    #[error("missing payload {0}")]
    MissingPayload(PathBuf),

    /// A statistic is undefined on the given input (all-zero kernel, etc).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The cross-segment mean of a kernel vanished, so the segment ratio is
    /// unbounded. Carries the same-segment mean for diagnostics.
    #[error("cross-segment mass vanishes (same-segment mean {same_mean}); ratio is infinite")]
    InfiniteRatio { same_mean: f64 },

    #[error("noise calibration failed: target self-drop {target} outside achieved range [{achieved_lo}, {achieved_hi}]")]
    Calibration {
        target: f64,
        achieved_lo: f64,
        achieved_hi: f64,
    },

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl LocalityError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidInstance(_) => "invalid-instance",
            Self::InvalidParameter(_) => "invalid-parameter",
            Self::NoForeground => "no-foreground",
            Self::Validation(_) => "validation",
            Self::Shape(_) => "shape",
            Self::Checksum { .. } => "checksum",
            Self::UnknownDtype(_) => "unknown-dtype",
            Self::MissingPayload(_) => "missing-payload",
            Self::Degenerate(_) => "degenerate",
            Self::InfiniteRatio { .. } => "infinite-ratio",
            Self::Calibration { .. } => "calibration-failure",
            Self::Divergence { .. } => "divergence",
            Self::InsufficientData(_) => "insufficient-data",
            Self::Io { .. } => "io",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, LocalityError>;
