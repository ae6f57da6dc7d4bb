//! Minimum-norm point in the convex hull of unit vectors.
//!
//! The best minimax handle for a fixed representation is the normalized
//! minimum-norm point of the convex hull of its vectors: maximizing
//! `min_x <u_x, f>` over unit `f` equals minimizing `sqrt(p^T G p)` over the
//! probability simplex, where `G` is the representation Gram matrix. Only
//! `G` enters, so everything here works on the Gram matrix alone.

use nalgebra::{DMatrix, DVector};

/// Supports up to this dimension are resolved by exact subset enumeration;
/// larger problems rely on the iterative polish alone.
const EXACT_ENUMERATION_LIMIT: usize = 16;

const POLISH_ITERATIONS: usize = 20_000;
const POLISH_GAP: f64 = 1e-14;

/// Minimizes `p^T G p` over the probability simplex.
///
/// Returns the minimizing weights and the attained value. For up to
/// [`EXACT_ENUMERATION_LIMIT`] vectors every support set is solved exactly
/// via its KKT system; a pairwise mass-transfer descent then polishes away
/// rounding. The procedure is deterministic.
pub(crate) fn min_quadratic_over_simplex(gram: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = gram.nrows();
    debug_assert_eq!(n, gram.ncols());
    if n == 1 {
        return (DVector::from_element(1, 1.0), gram[(0, 0)]);
    }

    let mut best_p = DVector::from_element(n, 1.0 / n as f64);
    let mut best_value = quadratic(gram, &best_p);

    if n <= EXACT_ENUMERATION_LIMIT {
        for mask in 1u32..(1u32 << n) {
            if let Some((p, value)) = solve_support(gram, mask) {
                if value < best_value {
                    best_value = value;
                    best_p = p;
                }
            }
        }
    }

    let (p, value) = polish(gram, best_p.clone());
    if value < best_value {
        (p, value)
    } else {
        (best_p, best_value)
    }
}

fn quadratic(gram: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    (gram * p).dot(p)
}

/// Solves the equality-constrained problem restricted to the support
/// `mask`: `G_S p = nu 1`, `sum p = 1`. Returns `None` when the restricted
/// system is singular or the solution leaves the simplex.
fn solve_support(gram: &DMatrix<f64>, mask: u32) -> Option<(DVector<f64>, f64)> {
    let n = gram.nrows();
    let support: Vec<usize> = (0..n).filter(|x| mask & (1 << x) != 0).collect();
    let k = support.len();
    if k == 1 {
        let x = support[0];
        let mut p = DVector::zeros(n);
        p[x] = 1.0;
        return Some((p, gram[(x, x)]));
    }
    let gs = DMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
    let ones = DVector::from_element(k, 1.0);
    let y = gs.lu().solve(&ones)?;
    let total: f64 = y.sum();
    if !(total.is_finite()) || total.abs() < 1e-300 {
        return None;
    }
    let mut p = DVector::zeros(n);
    for (i, &x) in support.iter().enumerate() {
        let v = y[i] / total;
        if !v.is_finite() || v < -1e-12 {
            return None;
        }
        p[x] = v.max(0.0);
    }
    // Renormalize after clamping so the candidate stays on the simplex.
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 {
        return None;
    }
    p /= sum;
    let value = quadratic(gram, &p);
    value.is_finite().then_some((p, value))
}

/// Pairwise mass-transfer descent: repeatedly move weight from the support
/// index with the largest `(G p)_x` to the index with the smallest, with an
/// exact line search. Monotone, so it can only improve the seed.
fn polish(gram: &DMatrix<f64>, mut p: DVector<f64>) -> (DVector<f64>, f64) {
    let n = gram.nrows();
    for _ in 0..POLISH_ITERATIONS {
        let s = gram * &p;
        let mut hi = usize::MAX;
        let mut lo = 0;
        for x in 0..n {
            if p[x] > 0.0 && (hi == usize::MAX || s[x] > s[hi]) {
                hi = x;
            }
            if s[x] < s[lo] {
                lo = x;
            }
        }
        if hi == usize::MAX || hi == lo {
            break;
        }
        let gap = s[hi] - s[lo];
        if gap <= POLISH_GAP {
            break;
        }
        let curvature = gram[(hi, hi)] + gram[(lo, lo)] - 2.0 * gram[(hi, lo)];
        if curvature <= 0.0 {
            break;
        }
        let step = (gap / curvature).min(p[hi]);
        if step <= 0.0 {
            break;
        }
        p[hi] -= step;
        p[lo] += step;
    }
    let value = quadratic(gram, &p);
    (p, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_gram_minimum_is_uniform() {
        let g = DMatrix::identity(4, 4);
        let (p, value) = min_quadratic_over_simplex(&g);
        assert_abs_diff_eq!(value, 0.25, epsilon = 1e-12);
        for x in 0..4 {
            assert_abs_diff_eq!(p[x], 0.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn two_correlated_vectors() {
        // G = [[1, c], [c, 1]]: uniform weights, value (1 + c) / 2.
        for c in [0.0, 0.3, 0.6, 0.99] {
            let g = DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]);
            let (_, value) = min_quadratic_over_simplex(&g);
            assert_abs_diff_eq!(value, (1.0 + c) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimum_can_drop_vectors_from_the_support() {
        // The third vector equals the first, so mass splits across the
        // distinct directions; value matches the two-vector problem.
        let g = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.2, 1.0, 0.2, 1.0, 0.2, 1.0, 0.2, 1.0],
        );
        let (p, value) = min_quadratic_over_simplex(&g);
        assert_abs_diff_eq!(value, 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn brute_force_grid_agreement() {
        // Dense simplex grid as an independent check on a 3x3 instance.
        let g = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.0],
        );
        let (_, value) = min_quadratic_over_simplex(&g);
        let mut brute = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let p = DVector::from_vec(vec![
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ]);
                brute = brute.min((&g * &p).dot(&p));
            }
        }
        assert!(value <= brute + 1e-9);
        assert!(value >= brute - 2e-5, "value {value}, grid {brute}");
    }

    #[test]
    fn kkt_certificate_at_the_optimum() {
        // (G p)_x >= p^T G p for all x certifies global optimality on the
        // simplex; check it on a batch of random PSD matrices.
        use rand::RngExt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = 2 + trial % 5;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let g = &a * a.transpose();
            let (p, value) = min_quadratic_over_simplex(&g);
            let s = &g * &p;
            for x in 0..n {
                assert!(
                    s[x] >= value - 1e-8 * (1.0 + value),
                    "trial {trial}: KKT violated at {x}: {} < {value}",
                    s[x]
                );
            }
        }
    }
}
