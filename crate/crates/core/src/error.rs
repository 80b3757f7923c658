use thiserror::Error;

/// Unified error type for the numeric pipeline.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Input violated a documented precondition (non-finite entries, bad shape, bad range).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operand dimensions do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Cosine similarity requested for a zero vector.
    #[error("cosine similarity undefined for a zero vector")]
    UndefinedSimilarity,

    /// Query point coincides with a moon circle center, so the nearest arc point is not unique.
    #[error("projection ambiguous: point lies at the center ({0}, {1}) of a moon circle")]
    AmbiguousProjection(f64, f64),

    /// Schedule parameters outside their valid ranges.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// Timestep outside the valid range for the operation.
    #[error("timestep {t} out of range: {reason}")]
    InvalidStep { t: usize, reason: String },

    /// Score/noise conversion at the extended index t=0, where 1 - alpha_bar = 0.
    #[error("noise level is zero at extended timestep 0; score conversion undefined")]
    ZeroNoiseLevel,

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// No dataset point carries the requested conditioning label.
    #[error("no dataset point matches label {0}")]
    NoMatchingPoints(u8),

    /// Checkpoint file is malformed or inconsistent with the requested configuration.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
