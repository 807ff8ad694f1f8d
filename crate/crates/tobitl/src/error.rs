//! Crate-wide error type.
//!
//! Variants carry enough location information (row/column, quantile index)
//! for a caller to report actionable diagnostics. [`Error::category`] groups
//! variants into the three classes the CLI maps to exit codes: data errors,
//! numerical failures, and configuration mistakes.

use thiserror::Error;

/// Coarse error class, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Malformed or invalid input data.
    Data,
    /// Numerical failure (rank deficiency, non-PSD matrices, budget blowups).
    Numerical,
    /// Inconsistent or invalid configuration.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    // ---- data / validation ----
    #[error("column `{name}` not found in the input table")]
    MissingColumn { name: String },
    #[error("value at row {row}, column `{column}` is not numeric: `{value}`")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("negative response at row {row} (the model is left-censored at 0)")]
    NegativeResponse { row: usize },
    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: String,
        got: usize,
        expected: usize,
    },
    #[error("too few observations: n = {n} but at least {min} are required")]
    TooFewRows { n: usize, min: usize },
    #[error("residual column does not match the first-stage fit fingerprint")]
    FingerprintMismatch,
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    // ---- numerical ----
    #[error("singular instrument design: smallest singular value {smallest:.3e} below {tol:.3e} of the largest; the excluded instrument carries no identifying variation")]
    SingularDesign { smallest: f64, tol: f64 },
    #[error("degenerate design in quantile regression: rank {rank} < {cols} on the active sample")]
    DegenerateDesign { rank: usize, cols: usize },
    #[error("brute-force budget exceeded: {points} grid points > {budget}")]
    BudgetExceeded { points: u128, budget: u128 },
    #[error("weight support [{lo}, {hi}] not covered by the quantile grid range [{grid_lo}, {grid_hi}]")]
    SupportUncovered {
        lo: f64,
        hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },
    #[error("atom at tau = {tau} does not coincide with any grid or precomputed point; fit the process with this location included")]
    AtomOffGrid { tau: f64 },
    #[error("covariance matrix is not numerically PSD: min eigenvalue {min_eig:.3e} < -1e-8 * trace")]
    NonPsd { min_eig: f64 },
    #[error("all {failed} of {total} replicates failed estimation")]
    AllReplicatesFailed { failed: usize, total: usize },
    #[error("replicate failure rate too high: {failed}/{total} exceeds {limit_pct}%")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit_pct: u8,
    },
    #[error("every quantile grid point was dropped as numerically singular")]
    NoUsableGridPoints,

    // ---- configuration ----
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("invalid weight specification `{spec}`: {reason}")]
    InvalidWeightSpec { spec: String, reason: String },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            MissingColumn { .. } | NotNumeric { .. } | NonFinite { .. }
            | NegativeResponse { .. } | LengthMismatch { .. } | TooFewRows { .. }
            | FingerprintMismatch | Csv(_) | Io(_) => ErrorCategory::Data,
            SingularDesign { .. } | DegenerateDesign { .. } | BudgetExceeded { .. }
            | SupportUncovered { .. } | AtomOffGrid { .. } | NonPsd { .. }
            | AllReplicatesFailed { .. } | TooManyFailures { .. } | NoUsableGridPoints => {
                ErrorCategory::Numerical
            }
            InvalidParameter { .. } | InvalidWeightSpec { .. } => ErrorCategory::Config,
        }
    }

    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
