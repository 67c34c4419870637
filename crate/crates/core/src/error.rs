use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("fields live on different tori")]
    GeometryMismatch,

    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("right-hand side is incompatible: mean {mean:e} exceeds tolerance {tolerance:e}")]
    Incompatible { mean: f64, tolerance: f64 },

    #[error("form is not positive definite at point {point} (smallest eigenvalue {value:e})")]
    Positivity { point: usize, value: f64 },

    #[error("operation requires a constant form")]
    NonConstant,

    #[error("operation requires a grid-resolved geometry (n <= 2)")]
    GridUnavailable,

    #[error("Fourier product exceeds bandwidth limit ({0})")]
    BandwidthOverflow(String),

    #[error("Newton iteration did not converge after {steps} steps (residual history {history:?})")]
    NonConvergence { steps: usize, history: Vec<f64> },

    #[error("positivity lost and damping could not restore it (residual {residual:e})")]
    PositivityBreakdown { residual: f64 },

    #[error("solution has not converged (residual {residual:e} > tolerance {tolerance:e})")]
    NotConverged { residual: f64, tolerance: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("under-resolved: {0}")]
    Resolution(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("specification rejected: {0}")]
    SpecViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
