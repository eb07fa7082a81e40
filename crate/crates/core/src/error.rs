use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} out of range (max level {max_level})")]
    LevelOutOfRange { level: usize, max_level: usize },

    #[error("bandwidth mismatch: {left} vs {right}")]
    BandwidthMismatch { left: usize, right: usize },

    #[error("grid of {grid} points aliases bandwidth {bandwidth} (need at least {needed})")]
    GridTooSmall {
        grid: usize,
        bandwidth: usize,
        needed: usize,
    },

    #[error("coefficient array of length {len} does not match bandwidth {bandwidth}")]
    CoefficientCount { len: usize, bandwidth: usize },

    #[error("Hermitian symmetry violated at mode {mode} (relative defect {defect:.3e})")]
    NotHermitian { mode: i64, defect: f64 },

    #[error("synthesis of a non-real vector to real samples")]
    NotReal,

    #[error("smoothing parameter t = {t} is negative")]
    NegativeSmoothingTime { t: f64 },

    #[error("point left the solver domain at {context}")]
    DomainExit { context: String },

    #[error("decay fit degenerate: only {points} usable modes (need {needed})")]
    DegenerateFit { points: usize, needed: usize },

    #[error("not enough data: {context}")]
    InsufficientData { context: String },

    #[error("linear solve failed: {context}")]
    SingularSystem { context: String },

    #[error("invalid parameter: {context}")]
    InvalidParameter { context: String },

    #[error("inner solve failed: {context}")]
    SolverFailed { context: String },
}

pub type Result<T> = std::result::Result<T, Error>;
