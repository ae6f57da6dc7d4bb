//! Shared helpers for the integration runs: closed-form references and a
//! brute-force oracle that deliberately avoid all optimizer code, so they
//! can referee it.

use rand::RngExt;
use rand_chacha::ChaCha20Rng;
use theta_bound::channel::{Channel, Composition};

pub const LN_SQRT_5: f64 = 0.8047189562170502;

/// Value of the best five-vector representation for the pentagon channel
/// in the large-degree regime, computed from scratch in three dimensions.
///
/// The channel forces inputs two apart to receive exactly orthogonal
/// vectors, while adjacent inputs are essentially unconstrained. Within
/// the rotation-symmetric family
///   u_x = (cos phi, sin phi cos(8 pi x / 5), sin phi sin(8 pi x / 5)),
/// pairs two apart have inner product  cos^2 phi - cos(pi/5) sin^2 phi,
/// which strictly decreases in phi. Orthogonality therefore pins phi to
/// the unique root, found here by bisection; smaller phi is infeasible
/// and larger phi only worsens the value -ln cos^2 phi. The returned
/// value is certified by rebuilding the vectors and measuring both the
/// constraint residual and the objective directly.
pub fn pentagon_symmetric_value() -> f64 {
    let c = (std::f64::consts::PI / 5.0).cos();
    let constraint = |phi: f64| {
        let (s, co) = phi.sin_cos();
        co * co - c * s * s
    };
    let mut lo = 0.0f64;
    let mut hi = std::f64::consts::FRAC_PI_2;
    assert!(constraint(lo) > 0.0 && constraint(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if constraint(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi = 0.5 * (lo + hi);

    // Rebuild the witness and check it the hard way.
    let vectors: Vec<[f64; 3]> = (0..5)
        .map(|x| {
            let angle = 8.0 * std::f64::consts::PI * (x as f64) / 5.0;
            [phi.cos(), phi.sin() * angle.cos(), phi.sin() * angle.sin()]
        })
        .collect();
    let inner = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    for x in 0..5 {
        let norm = inner(&vectors[x], &vectors[x]).sqrt();
        assert!((norm - 1.0).abs() < 1e-12, "oracle vector {x} not unit");
        let two_apart = inner(&vectors[x], &vectors[(x + 2) % 5]).abs();
        assert!(
            two_apart < 1e-12,
            "oracle orthogonality residual {two_apart:e} at input {x}"
        );
    }
    let handle = [1.0, 0.0, 0.0];
    let mut worst = f64::NEG_INFINITY;
    for v in &vectors {
        let cos = inner(v, &handle);
        worst = worst.max(-(cos * cos).ln());
    }
    worst
}

/// Natural-log binary entropy.
pub fn binary_entropy(lambda: f64) -> f64 {
    let term = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
    term(lambda) + term(1.0 - lambda)
}

/// Inverts `ln 2 - h(lambda) = rate` on (0, 1/2]. The entropy is strictly
/// increasing there, so bisection converges to full precision.
pub fn lambda_for_rate(rate: f64) -> f64 {
    assert!(rate > 0.0 && rate < std::f64::consts::LN_2);
    let target = std::f64::consts::LN_2 - rate;
    let mut lo = 0.0f64;
    let mut hi = 0.5f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Classical distance-rate trade-off for a binary channel with pairwise
/// distance `z`: at rate `r` the bound is `2 lambda (1 - lambda) z` with
/// `lambda` solving `ln 2 - h(lambda) = r`.
pub fn classical_elias(rate: f64, z: f64) -> f64 {
    let lambda = lambda_for_rate(rate);
    2.0 * lambda * (1.0 - lambda) * z
}

/// Crossover probability of the binary symmetric channel whose two inputs
/// have Bhattacharyya coefficient `b`.
pub fn crossover_for_coefficient(b: f64) -> f64 {
    (1.0 - (1.0 - b * b).sqrt()) / 2.0
}

/// Random channel with `k` inputs and `k + 1` outputs, rows strictly
/// positive so every Gram entry is well inside (0, 1).
pub fn random_channel(rng: &mut ChaCha20Rng, k: usize) -> Channel {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let raw: Vec<f64> = (0..k + 1)
                .map(|_| 0.05 + rng.random_range(0.0..1.0))
                .collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    Channel::new(rows).expect("rows are stochastic by construction")
}

/// Random composition bounded away from the simplex boundary, so rates are
/// positive and no weight vanishes.
pub fn random_composition(rng: &mut ChaCha20Rng, k: usize) -> Composition {
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.random_range(0.0..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    Composition::new(raw.into_iter().map(|v| v / sum).collect())
        .expect("entries are positive and normalized")
}
