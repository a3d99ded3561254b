use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("incompatible operands: {0}")]
    IncompatibleOperands(String),

    #[error("invalid coordinate index {0}: sequence indices start at 1")]
    InvalidIndex(usize),

    #[error("index {index} exceeds support bound {bound}")]
    SupportBound { index: usize, bound: usize },

    #[error("translation by {steps}/{q} is not representable on a grid with step 1/{grid}")]
    GridMismatch { steps: f64, q: u32, grid: u32 },

    #[error("lambda^{exponent} lies outside double-precision range")]
    ExponentOutOfRange { exponent: f64 },

    #[error("degenerate family: all Gram eigenvalues are at or below tolerance")]
    DegenerateFamily,

    #[error("family is empty")]
    EmptyFamily,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("element {index} is the zero vector")]
    ZeroVector { index: usize },

    #[error("precondition on `{field}` violated: {reason}")]
    Precondition { field: &'static str, reason: String },

    #[error("schedule violation at term {n}: {reason}")]
    ScheduleViolation { n: usize, reason: String },

    #[error("earlier term {n} is not annihilated at row {k}")]
    AnnihilationFailed { k: usize, n: usize },

    #[error("localization fails at (j={j}, k={k}): |<e_j,f_k>| e^(beta|j-k|) = {ratio}")]
    LocalizationFailed { j: usize, k: usize, ratio: f64 },

    #[error("row {k} out of range 1..={len}")]
    OutOfRange { k: usize, len: usize },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

impl Error {
    pub(crate) fn precondition(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Precondition {
            field,
            reason: reason.into(),
        }
    }
}
