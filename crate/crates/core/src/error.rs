use thiserror::Error;

#[derive(Debug, Error)]
pub enum CcrError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:.3e})")]
    NonHermitian { deviation: f64 },
    #[error("resonant denominator: {0}")]
    Resonance(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("tolerance {tol:.3e} not reached within step budget")]
    ToleranceNotReached { tol: f64 },
    #[error("adiabatic tracking ambiguous at grid step {step}: max overlap {overlap:.3} < 0.5")]
    TrackingAmbiguity { step: usize, overlap: f64 },
    #[error("no solution found: {0}")]
    NotFound(String),
    #[error("hilbert dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
}
