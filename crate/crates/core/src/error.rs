use thiserror::Error;

/// Errors raised by the q-boson numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("deformation parameter must satisfy 0 < q <= 1 (got {0})")]
    InvalidDeformation(f64),

    #[error("Fock truncation needs n_max >= 1 (got {0})")]
    InvalidTruncation(usize),

    #[error("q-factorial [{0}]! overflows f64")]
    Overflow(usize),

    #[error("q-exponential series diverges: |x| = {magnitude} >= radius {radius}")]
    Divergence { magnitude: f64, radius: f64 },

    #[error("no convergence after {terms} terms")]
    NonConvergence { terms: usize },

    #[error("the classical exponential (q = 1) has no finite first zero")]
    NoFiniteZero,

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not hermitian (max violation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not one (got {0})")]
    TraceNotUnit(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("normal-ordering cutoff {cutoff} exceeds n_max/2 = {limit}")]
    CutoffTooLarge { cutoff: usize, limit: usize },

    #[error("P-function is not normalized (total weight {0})")]
    NotNormalized(f64),

    #[error("measure calibration failed: best moment error {0:e}")]
    CalibrationFailed(f64),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
