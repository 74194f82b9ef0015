use thiserror::Error;

use crate::cubic::RootClass;

pub type Result<T> = std::result::Result<T, BlochError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlochError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("relaxation rate R{index} = {value} is negative")]
    NegativeRate { index: usize, value: f64 },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("branch mismatch: operation needs {expected}, roots are {found:?}")]
    BranchMismatch {
        expected: &'static str,
        found: RootClass,
    },

    #[error("double-pole branch needs a nonzero simple root, got z1 = {0}")]
    ZeroRootInDoubleBranch(f64),

    #[error("Gamma is singular (c0 = {c0}); no unique steady state")]
    SingularGamma { c0: f64 },

    #[error("eigenvalue is degenerate: every adjugate column vanishes")]
    DegenerateEigenvalue,

    #[error("not an eigenvalue: relative residual {residual:e}")]
    NotAnEigenvalue { residual: f64 },

    #[error("adjugate column {column} is below the norm floor")]
    ZeroColumn { column: usize },

    #[error("column index {0} out of range 1..=3")]
    InvalidColumn(usize),

    #[error("basis is nearly singular (scaled triple product {0:e})")]
    NearSingularFrame(f64),

    #[error("no eigenframe for {0:?} roots")]
    NoFrame(RootClass),

    #[error("negative input: {0}")]
    NegativeInput(&'static str),

    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("grid of {cells} cells exceeds the {max} cell limit")]
    ResolutionTooLarge { cells: usize, max: usize },

    #[error("atlas coordinates need R1 = R2 >= R3 (got R1={r1}, R2={r2}, R3={r3})")]
    NotAxial { r1: f64, r2: f64, r3: f64 },

    #[error("RK4 step {step:e} exceeds the stability bound {max:e}")]
    StepTooLarge { step: f64, max: f64 },

    #[error("invalid tolerance {0:e}; expected a value in (0, 1e-3]")]
    InvalidTolerance(f64),

    #[error("non-finite value in matrix or result")]
    NonFinite,

    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(&'static str),
}

impl BlochError {
    /// Stable machine-readable name, used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            BlochError::NonFiniteInput(_) => "NonFiniteInput",
            BlochError::NegativeRate { .. } => "NegativeRate",
            BlochError::NegativeTime(_) => "NegativeTime",
            BlochError::BranchMismatch { .. } => "BranchMismatch",
            BlochError::ZeroRootInDoubleBranch(_) => "ZeroRootInDoubleBranch",
            BlochError::SingularGamma { .. } => "SingularGamma",
            BlochError::DegenerateEigenvalue => "DegenerateEigenvalue",
            BlochError::NotAnEigenvalue { .. } => "NotAnEigenvalue",
            BlochError::ZeroColumn { .. } => "ZeroColumn",
            BlochError::InvalidColumn(_) => "InvalidColumn",
            BlochError::NearSingularFrame(_) => "NearSingularFrame",
            BlochError::NoFrame(_) => "NoFrame",
            BlochError::NegativeInput(_) => "NegativeInput",
            BlochError::OutOfRange { .. } => "OutOfRange",
            BlochError::ResolutionTooLarge { .. } => "ResolutionTooLarge",
            BlochError::NotAxial { .. } => "NotAxial",
            BlochError::StepTooLarge { .. } => "StepTooLarge",
            BlochError::InvalidTolerance(_) => "InvalidTolerance",
            BlochError::NonFinite => "NonFinite",
            BlochError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}
