use thiserror::Error;

/// Library-wide error type.
///
/// Variants are grouped by origin: input validation, mathematical
/// preconditions, numerical failures, and enumeration guards. Callers that
/// map errors to process exit codes can rely on this grouping staying
/// coarse.
#[derive(Debug, Error)]
pub enum Error {
    /// A channel matrix failed validation. `row` is the offending input row.
    #[error("invalid channel row {row}: {reason}")]
    InvalidChannel { row: usize, reason: String },

    /// A probability vector failed validation.
    #[error("invalid composition: {0}")]
    InvalidComposition(String),

    /// A conditional type (row-stochastic matrix) failed validation.
    #[error("invalid conditional type row {row}: {reason}")]
    InvalidConditional { row: usize, reason: String },

    /// The entrywise power of the Gram matrix has a negative eigenvalue, so
    /// no exact factorization exists at this degree.
    #[error(
        "gram matrix is not nonnegative-definite at rho = {rho} \
         (smallest eigenvalue {eigenvalue:.3e}); use the numerical optimizer \
         instead of the exact factorization"
    )]
    NotNonnegDefinite { rho: f64, eigenvalue: f64 },

    /// The conditional type does not leave the composition invariant.
    #[error("conditional type is not stationary for P: max marginal residual {residual:.3e}")]
    NotStationary { residual: f64 },

    /// The numerical optimizer could not produce a usable certificate.
    #[error("optimizer failed: {0}")]
    Optimizer(String),

    /// An exhaustive enumeration would exceed the configured guard.
    #[error("enumeration guard exceeded: about {count:.3e} candidates (limit {limit:.1e})")]
    GuardExceeded { count: f64, limit: f64 },

    /// Malformed caller input that is not tied to a specific row.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An internal invariant was violated; this indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
