//! Closed-form geometry for binary-input channels.
//!
//! With two inputs everything reduces to plane trigonometry. The two
//! representation vectors sit at angles `+-alpha` around a bisector, with
//! `cos(2 alpha)` equal to the pairwise cap `e^(-Z/rho)`, and the optimal
//! handle sits at angle `beta` satisfying
//! `sin(2 beta) = (Q(0) - Q(1)) sin(2 alpha)` with `|beta| <= alpha`.
//! These formulas are the ground truth the numerical optimizer is tested
//! against.

use crate::channel::{Composition, GramMatrix};
use crate::error::{Error, Result};
use crate::tol;

/// Solved binary geometry at degree `rho` and weights `Q`.
///
/// Construction validates the defining equations within
/// [`tol::BINARY_GEOMETRY`], so holding a value of this type is itself a
/// small certificate.
#[derive(Debug, Clone, Copy)]
pub struct BinaryGeometry {
    /// Bhattacharyya distance between the two inputs, in nats.
    pub z: f64,
    pub rho: f64,
    /// Half-angle between the two representation vectors.
    pub alpha: f64,
    /// Handle angle measured from the bisector, positive toward input 0.
    pub beta: f64,
    /// Weight of input 0 (the weight of input 1 is `1 - q0`).
    pub q0: f64,
    /// The weighted objective at the optimal handle, in nats.
    pub value: f64,
}

impl BinaryGeometry {
    fn validate(&self) -> Result<()> {
        let c = (-self.z / self.rho).exp();
        let eq_alpha = ((2.0 * self.alpha).cos() - c).abs();
        let eq_beta =
            ((2.0 * self.beta).sin() - (2.0 * self.q0 - 1.0) * (2.0 * self.alpha).sin()).abs();
        if eq_alpha > tol::BINARY_GEOMETRY || eq_beta > tol::BINARY_GEOMETRY {
            return Err(Error::Internal(format!(
                "binary geometry equations violated: alpha residual {eq_alpha:.3e}, \
                 beta residual {eq_beta:.3e}"
            )));
        }
        if self.beta.abs() > self.alpha + tol::BINARY_GEOMETRY
            || self.alpha > std::f64::consts::FRAC_PI_4 + tol::BINARY_GEOMETRY
            || self.value < -tol::BINARY_GEOMETRY
        {
            return Err(Error::Internal(format!(
                "binary geometry branch violated: alpha {}, beta {}, value {}",
                self.alpha, self.beta, self.value
            )));
        }
        Ok(())
    }
}

/// Reads the binary Bhattacharyya distance off a 2x2 Gram matrix.
/// Zero-error pairs give `+inf`.
pub fn z_from_gram(gram: &GramMatrix) -> Result<f64> {
    if gram.dim() != 2 {
        return Err(Error::InvalidInput(format!(
            "binary geometry needs a 2x2 gram matrix, got {0}x{0}",
            gram.dim()
        )));
    }
    let b = gram.entry(0, 1);
    Ok(if b == 0.0 { f64::INFINITY } else { -b.ln() })
}

/// `ln cos t`, computed through `ln(1 - 2 sin^2(t/2))` so it stays accurate
/// for the very small angles that large `rho` produces.
fn ln_cos(t: f64) -> f64 {
    let s = (0.5 * t).sin();
    (-2.0 * s * s).ln_1p()
}

/// Closed-form value of the degree-`rho` weighted objective for a binary
/// pair at Bhattacharyya distance `z`, with input weights `q`.
///
/// Fails on `z = +inf` (a zero-error pair never mixes, so no finite degree
/// reaches it) and on weights that are not a length-2 composition.
pub fn binary_theta(z: f64, rho: f64, q: &Composition) -> Result<BinaryGeometry> {
    if q.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "binary weights must have length 2, got {}",
            q.len()
        )));
    }
    if z.is_infinite() {
        return Err(Error::InvalidInput(
            "binary pair is zero-error (infinite distance); the closed form only covers \
             finite distances"
                .into(),
        ));
    }
    if !z.is_finite() || z < 0.0 {
        return Err(Error::InvalidInput(format!(
            "distance must be finite and nonnegative, got {z}"
        )));
    }
    if !rho.is_finite() || rho < 1.0 {
        return Err(Error::InvalidInput(format!(
            "degree rho must be a finite value >= 1, got {rho}"
        )));
    }
    let q0 = q.get(0);
    let q1 = q.get(1);

    // cos(2 alpha) = e^(-z/rho). The sine form keeps 1 - c to full
    // precision when z/rho is tiny.
    let c = (-z / rho).exp();
    let one_minus_c = -(-z / rho).exp_m1();
    let sin_2a = (one_minus_c * (1.0 + c)).sqrt().min(1.0);
    let alpha = 0.5 * sin_2a.asin();

    // sin(2 beta) = (q0 - q1) sin(2 alpha), branch |beta| <= alpha with the
    // handle leaning toward the heavier input.
    let sin_2b = (q0 - q1) * sin_2a;
    let beta = 0.5 * sin_2b.asin();

    let value = -2.0 * (q0 * ln_cos(alpha - beta) + q1 * ln_cos(alpha + beta));
    let geometry = BinaryGeometry {
        z,
        rho,
        alpha,
        beta,
        q0,
        value: value.max(0.0),
    };
    geometry.validate()?;
    Ok(geometry)
}

/// Binary entropy `h(lambda)` in nats.
pub fn binary_entropy(lambda: f64) -> f64 {
    let term = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
    term(lambda) + term(1.0 - lambda)
}

/// The classical distance-rate trade-off recovered in the large-degree
/// limit: at weight `lambda in [0, 1/2]` the rate threshold is
/// `ln 2 - h(lambda)` and the distance bound is `2 lambda (1-lambda) z`.
pub fn elias_limit(lambda: f64, z: f64) -> Result<(f64, f64)> {
    if !(0.0..=0.5).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "lambda must lie in [0, 1/2], got {lambda}"
        )));
    }
    let rate = std::f64::consts::LN_2 - binary_entropy(lambda);
    Ok((rate, 2.0 * lambda * (1.0 - lambda) * z))
}

/// Limit of `rho * binary_theta` as the degree grows: `2 Q(0) Q(1) z`.
pub fn rho_theta_limit(q: &Composition, z: f64) -> Result<f64> {
    if q.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "binary weights must have length 2, got {}",
            q.len()
        )));
    }
    Ok(2.0 * q.get(0) * q.get(1) * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Channel;
    use approx::assert_abs_diff_eq;

    fn z06() -> f64 {
        -(0.6f64).ln()
    }

    #[test]
    fn z_from_bsc_gram() {
        let gram = Channel::binary_symmetric(0.1).unwrap().gram();
        assert_abs_diff_eq!(z_from_gram(&gram).unwrap(), z06(), epsilon = 1e-12);
    }

    #[test]
    fn z_from_identity_gram_is_infinite_and_rejected() {
        let gram = Channel::identity(2).unwrap().gram();
        let z = z_from_gram(&gram).unwrap();
        assert!(z.is_infinite());
        assert!(binary_theta(z, 2.0, &Composition::uniform(2)).is_err());
    }

    #[test]
    fn uniform_weights_give_bisector_handle() {
        // At Q = (1/2, 1/2): beta = 0 and value = -ln((1 + e^(-z/rho))/2).
        let g = binary_theta(z06(), 1.0, &Composition::uniform(2)).unwrap();
        assert_eq!(g.beta, 0.0);
        assert_abs_diff_eq!(g.value, -(0.8f64).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(g.value, 0.2231, epsilon = 5e-5);
    }

    #[test]
    fn point_mass_weights_give_zero_value() {
        let g = binary_theta(z06(), 3.0, &Composition::point_mass(2, 0)).unwrap();
        assert_abs_diff_eq!(g.beta, g.alpha, epsilon = 1e-14);
        assert_abs_diff_eq!(g.value, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn duplicate_inputs_give_zero_value() {
        let g = binary_theta(0.0, 5.0, &Composition::uniform(2)).unwrap();
        assert_eq!(g.alpha, 0.0);
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn handle_leans_toward_heavier_input() {
        let q = Composition::new(vec![0.9, 0.1]).unwrap();
        let g = binary_theta(z06(), 2.0, &q).unwrap();
        assert!(g.beta > 0.0 && g.beta <= g.alpha);
        let q_rev = Composition::new(vec![0.1, 0.9]).unwrap();
        let g_rev = binary_theta(z06(), 2.0, &q_rev).unwrap();
        assert_abs_diff_eq!(g_rev.beta, -g.beta, epsilon = 1e-14);
        assert_abs_diff_eq!(g_rev.value, g.value, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_beta_matches_direct_minimization() {
        // Golden-section search over the handle angle as an independent
        // check of the stationarity branch.
        let objective = |alpha: f64, q0: f64, beta: f64| {
            -2.0 * (q0 * ln_cos(alpha - beta) + (1.0 - q0) * ln_cos(alpha + beta))
        };
        for &(q0, rho, z) in &[
            (0.5, 1.0, z06()),
            (0.7, 2.0, z06()),
            (0.9, 10.0, -(0.2f64).ln()),
            (0.6, 100.0, -(0.9f64).ln()),
        ] {
            let q = Composition::new(vec![q0, 1.0 - q0]).unwrap();
            let g = binary_theta(z, rho, &q).unwrap();
            let (mut lo, mut hi) = (-g.alpha, g.alpha);
            let phi = 0.5 * (5.0f64.sqrt() - 1.0);
            for _ in 0..200 {
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if objective(g.alpha, q0, m1) < objective(g.alpha, q0, m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let beta_direct = 0.5 * (lo + hi);
            // The objective is flat to first order at the optimum, so the
            // search resolves beta only to the square root of the value's
            // precision. The value comparison below is the sharp one.
            assert_abs_diff_eq!(g.beta, beta_direct, epsilon = 2e-8);
            assert_abs_diff_eq!(
                g.value,
                objective(g.alpha, q0, beta_direct),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn handle_angle_is_stationary() {
        // Central finite difference of the objective in beta vanishes.
        let q = Composition::new(vec![0.7, 0.3]).unwrap();
        let g = binary_theta(z06(), 5.0, &q).unwrap();
        let f = |beta: f64| {
            -2.0 * (0.7 * ln_cos(g.alpha - beta) + 0.3 * ln_cos(g.alpha + beta))
        };
        let h = 1e-6;
        let derivative = (f(g.beta + h) - f(g.beta - h)) / (2.0 * h);
        assert!(derivative.abs() <= 1e-8, "derivative {derivative}");
    }

    #[test]
    fn scaled_value_grows_to_its_limit() {
        let q = Composition::new(vec![0.7, 0.3]).unwrap();
        let limit = rho_theta_limit(&q, z06()).unwrap();
        assert_abs_diff_eq!(limit, 2.0 * 0.7 * 0.3 * z06(), epsilon = 1e-15);
        let mut previous = 0.0;
        for &rho in &[1.0, 2.0, 5.0, 10.0, 100.0, 1e4, 1e6] {
            let scaled = rho * binary_theta(z06(), rho, &q).unwrap().value;
            assert!(scaled >= previous - 1e-12, "rho {rho}");
            assert!(scaled <= limit + 1e-9, "rho {rho}");
            previous = scaled;
        }
        // At rho = 1e4 the gap to the limit is below one percent.
        let scaled = 1e4 * binary_theta(z06(), 1e4, &q).unwrap().value;
        assert!((limit - scaled) / limit <= 0.01);
        // And at rho = 1e6 it is essentially closed.
        let scaled = 1e6 * binary_theta(z06(), 1e6, &q).unwrap().value;
        assert!((limit - scaled) / limit <= 1e-4);
    }

    #[test]
    fn elias_limit_endpoints() {
        let (rate, distance) = elias_limit(0.5, z06()).unwrap();
        assert_abs_diff_eq!(rate, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(distance, 0.5 * z06(), epsilon = 1e-15);
        let (rate, distance) = elias_limit(0.0, z06()).unwrap();
        assert_abs_diff_eq!(rate, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(distance, 0.0);
        assert!(elias_limit(0.6, z06()).is_err());
    }

    #[test]
    fn elias_limit_at_eleven_percent() {
        let (rate, distance) = elias_limit(0.11, z06()).unwrap();
        assert_abs_diff_eq!(rate, 0.3466, epsilon = 5e-5);
        assert_abs_diff_eq!(distance, 0.1000, epsilon = 5e-5);
    }

    #[test]
    fn rejects_bad_degrees() {
        let q = Composition::uniform(2);
        assert!(binary_theta(z06(), 0.5, &q).is_err());
        assert!(binary_theta(z06(), f64::NAN, &q).is_err());
        assert!(binary_theta(-1.0, 2.0, &q).is_err());
    }
}
