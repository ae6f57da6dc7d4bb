//! Central numerical tolerances.
//!
//! Every magic epsilon in the crate lives here so the relationships between
//! them stay auditable. Loosening one of these without checking its
//! dependents (noted on each constant) will silently weaken certificates.

/// Channel rows must sum to one within this bound.
pub const ROW_SUM: f64 = 1e-12;

/// A symmetric matrix counts as positive semidefinite when its smallest
/// eigenvalue is at least `-PSD_EIG`. Used by Gram validation and the
/// nonnegative-definiteness test for entrywise powers.
pub const PSD_EIG: f64 = 1e-9;

/// Gram entries with absolute value below this are snapped to exact zero,
/// so zero-error pairs are represented exactly and orthogonality
/// constraints stay hard.
pub const GRAM_SNAP: f64 = 1e-14;

/// Representation vectors and handles must have unit norm within this bound.
pub const UNIT_NORM: f64 = 1e-10;

/// Default ceiling on the feasibility residual of an accepted certificate.
pub const FEAS_DEFAULT: f64 = 1e-8;

/// Exact factorizations must reproduce the target Gram entrywise within
/// this bound.
pub const FACTOR_RESIDUAL: f64 = 1e-8;

/// The optimizer treats the objective as stalled when it improves by less
/// than this over a full stall window.
pub const OBJ_STALL: f64 = 1e-10;

/// A certificate's stored value and residual must agree with a recomputation
/// from its own vectors within this bound.
pub const CERT_AUDIT: f64 = 1e-10;

/// The weighted handle must satisfy its fixed-point condition within this
/// stationarity residual.
pub const HANDLE_STATIONARY: f64 = 1e-8;

/// Conditional types must preserve the composition within this marginal
/// residual before a bound point is assembled.
pub const STATIONARY: f64 = 1e-9;

/// Closed-form binary geometry must satisfy its defining equations within
/// this bound.
pub const BINARY_GEOMETRY: f64 = 1e-12;

/// Slack allowed when checking exhaustive code-search inequalities; covers
/// products of up to a few dozen rounding errors.
pub const EXHAUSTIVE_SLACK: f64 = 1e-12;

/// Slack allowed in randomized packing and eigenvalue spot checks.
pub const SPOT_CHECK_SLACK: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping_is_finer_than_feasibility() {
        // Snapped zeros must never show up as feasibility violations.
        assert!(GRAM_SNAP < FEAS_DEFAULT);
    }

    #[test]
    fn audit_is_finer_than_acceptance_scale() {
        assert!(CERT_AUDIT <= 1e-9);
        assert!(OBJ_STALL <= CERT_AUDIT);
    }
}
