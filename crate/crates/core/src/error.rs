use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("non-finite result: {0}")]
    NonFiniteResult(String),

    #[error("degenerate dressed poles: |δ+ - δ-| = {separation:e} below tolerance {tolerance:e}")]
    DegeneratePoles { separation: f64, tolerance: f64 },

    #[error("population correction undefined: Δc + iγ23 = 0")]
    InvalidCorrection,

    #[error("invalid detuning grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit diverged: every start produced non-finite residuals")]
    FitDiverged,

    #[error("fits have mismatched sample sizes ({0} vs {1})")]
    MismatchedSampleSize(usize, usize),

    #[error("integration step too large: {0}")]
    StepTooLarge(String),

    #[error("non-physical parameters: {0}")]
    NonPhysicalParams(String),

    #[error("averaging window too short: {0}")]
    WindowTooShort(String),

    #[error("quantifier undefined: ln(h_i) = 0 (no initial absorption)")]
    DivisionByZero,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            name,
            reason: reason.into(),
        }
    }
}
