//! Rate-dependent distance bounds assembled from theta certificates.
//!
//! A certified theta value forces codeword inner products up through the
//! finite Plotkin form: any code of size `M` and length `n` has a pair with
//! product inner at least `((M e^{-n theta} - 1)/(M - 1))^rho`. For rates
//! above `I(P,V) + theta(rho,P,V)` this yields the upper bound
//! `rho * theta(rho,P,V)` on the normalized minimum Bhattacharyya distance.
//! A coordinate-descent search over stationary conditional types `V`
//! tightens the bound at each rate, and an envelope over a degree grid
//! produces a distance-rate curve.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;

use crate::channel::{
    mutual_information, stationarity_residual, Composition, ConditionalType, GramMatrix,
};
use crate::error::{Error, Result};
use crate::par;
use crate::theta::{optimize_theta_weighted, theta_pv, OptimizeOptions, ThetaPv, DEFAULT_SEED};
use crate::tol;

// ---------------------------------------------------------------------------
// Finite Plotkin form
// ---------------------------------------------------------------------------

/// Lower bound on the maximum pairwise codeword inner product forced by a
/// theta value: `((M e^{-n theta} - 1)/(M - 1))^rho`, clamped to 0 in the
/// vacuous regime `M e^{-n theta} <= 1`.
///
/// Any certified upper bound on theta is a sound input: overestimating
/// theta only lowers the returned value.
pub fn finite_plotkin_rhs(m: usize, n: usize, theta_value: f64, rho: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "code size must be at least 2, got {m}"
        )));
    }
    if n < 1 {
        return Err(Error::InvalidInput(format!(
            "block length must be at least 1, got {n}"
        )));
    }
    if !(theta_value >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "theta value must be nonnegative, got {theta_value}"
        )));
    }
    if !(rho >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "degree rho must be at least 1, got {rho}"
        )));
    }
    let t = m as f64 * (-(n as f64) * theta_value).exp();
    if t <= 1.0 {
        return Ok(0.0);
    }
    Ok(((t - 1.0) / (m as f64 - 1.0)).powf(rho))
}

/// The same inequality read as a distance cap: the minimum Bhattacharyya
/// distance of any `(n, M)` code is at most `-ln` of
/// [`finite_plotkin_rhs`]. Infinite in the vacuous regime.
pub fn finite_plotkin_distance(m: usize, n: usize, theta_value: f64, rho: f64) -> Result<f64> {
    let rhs = finite_plotkin_rhs(m, n, theta_value, rho)?;
    if rhs <= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok((-rhs.ln()).max(0.0))
    }
}

// ---------------------------------------------------------------------------
// Bound points
// ---------------------------------------------------------------------------

/// One evaluated (rate threshold, distance bound) pair with its audit trail.
#[derive(Debug, Clone)]
pub struct BoundPoint {
    pub rho: f64,
    pub p: Composition,
    pub v: ConditionalType,
    /// `sum_x P(x) theta(rho, V(.|x))`, in nats.
    pub theta_pv_value: f64,
    /// `I(P, V)`, in nats.
    pub mutual_info: f64,
    /// `I(P,V) + theta`; the distance bound applies to codes of rate above
    /// this threshold.
    pub rate_threshold: f64,
    /// `rho * theta`, in nats per channel use.
    pub distance_bound: f64,
    /// True when `P` is a point mass: the rate is 0 and the bound vacuous.
    pub degenerate: bool,
    pub certificates: ThetaPv,
}

/// Evaluates the distance bound at a fixed conditional type.
///
/// `V` must preserve the composition: `PV = P` within
/// [`tol::STATIONARY`]; otherwise the bound does not apply and the call
/// fails rather than returning a misleading number.
pub fn bound_point(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    v: &ConditionalType,
    options: &OptimizeOptions,
) -> Result<BoundPoint> {
    let n = gram.dim();
    if p.len() != n || v.dim() != n {
        return Err(Error::InvalidInput(format!(
            "composition ({}) and conditional type ({}) must match the alphabet size {n}",
            p.len(),
            v.dim()
        )));
    }
    let residual = stationarity_residual(p, v);
    if residual > tol::STATIONARY {
        return Err(Error::NotStationary { residual });
    }
    let certificates = theta_pv(gram, rho, p, v, options)?;
    let mutual_info = mutual_information(p, v)?;
    let theta = certificates.value;
    Ok(BoundPoint {
        rho,
        p: p.clone(),
        v: v.clone(),
        theta_pv_value: theta,
        mutual_info,
        rate_threshold: mutual_info + theta,
        distance_bound: rho * theta,
        degenerate: p.is_point_mass(),
        certificates,
    })
}

/// The product-type specialization `V(x'|x) = P(x')`: the rate threshold
/// collapses to the weighted theta value itself since `I(P,V) = 0`.
///
/// This routes through [`bound_point`] with identical options, so calling
/// `bound_point` directly with that `V` reproduces it bit for bit.
pub fn bound_point_marton(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    options: &OptimizeOptions,
) -> Result<BoundPoint> {
    bound_point(gram, rho, p, &ConditionalType::from_rows_equal(p), options)
}

// ---------------------------------------------------------------------------
// Search over conditional types
// ---------------------------------------------------------------------------

/// Budget knobs for [`search_v`] and [`bound_curve`].
#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Options for the inner theta solves; the same options (and seed) are
    /// used for every evaluation, so searches are deterministic.
    pub optimize: OptimizeOptions,
    /// Full passes over all 2x2 exchange directions of the joint
    /// distribution.
    pub sweeps: usize,
    /// Coarse grid points per direction before golden-section refinement.
    pub line_grid: usize,
    /// Golden-section refinement steps around the best grid point.
    pub golden_iterations: usize,
    /// Minimum merit improvement for a sweep to count as progress.
    pub improvement_tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        let mut optimize = OptimizeOptions::fast(DEFAULT_SEED);
        optimize.restarts = 1;
        optimize.max_iterations = 800;
        Self {
            optimize,
            sweeps: 6,
            line_grid: 7,
            golden_iterations: 14,
            improvement_tolerance: 1e-9,
        }
    }
}

impl SearchOptions {
    /// Cheap preset for sweeps over many (rate, degree) pairs: theta
    /// solves use structured starts and handle polish only, no iterative
    /// descent. On channels whose cap matrix stays positive semidefinite
    /// (all binary channels in particular) the structured start is already
    /// exact, so nothing is lost.
    pub fn coarse(seed: u64) -> Self {
        let mut optimize = OptimizeOptions::fast(seed);
        optimize.restarts = 0;
        optimize.max_iterations = 0;
        Self {
            optimize,
            sweeps: 4,
            line_grid: 5,
            golden_iterations: 12,
            improvement_tolerance: 1e-9,
        }
    }
}

/// Search state: the merit of a joint distribution. Feasible candidates
/// (rate threshold below the target rate) order by distance bound;
/// infeasible ones order by how far the threshold overshoots, and always
/// lose to feasible ones.
#[derive(Clone, Copy, Debug)]
struct Merit {
    feasible: bool,
    key: f64,
}

impl Merit {
    const WORST: Merit = Merit {
        feasible: false,
        key: f64::INFINITY,
    };

    fn better_than(&self, other: &Merit) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            _ => self.key < other.key,
        }
    }
}

/// Minimizes the distance bound over stationary conditional types subject
/// to `rate_threshold < r`.
///
/// The search walks the joint distribution `J(x,x') = P(x) V(x'|x)` over
/// the polytope with both marginals equal to `P`, so `PV = P` holds by
/// construction at every step. 2x2 exchange moves span that polytope;
/// each move is line-searched on a coarse grid plus golden-section
/// refinement. Multi-started from product, diagonal-mixture, and (for
/// shift-invariant `P`) cyclic-shift joints.
///
/// Returns `Ok(None)` when no evaluated type meets the rate condition;
/// that is a value, not an error.
pub fn search_v(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    r: f64,
    options: &SearchOptions,
) -> Result<Option<BoundPoint>> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target rate must be positive, got {r}"
        )));
    }
    let n = gram.dim();
    if p.len() != n {
        return Err(Error::InvalidInput(format!(
            "composition has length {} but the channel has {n} inputs",
            p.len()
        )));
    }

    let starts = joint_starts(p);
    // One value cache for the whole search. Entries are pure functions of
    // their key, so sharing across starts only saves work.
    let cache = RowValueCache::default();
    let descended: Vec<(DMatrix<f64>, Merit)> = par::map_slice(&starts, |start| {
        descend_joint(gram, rho, p, r, start.clone(), options, &cache)
    });
    let mut best: Option<(DMatrix<f64>, Merit)> = None;
    for (j, merit) in descended {
        let better = match &best {
            None => true,
            Some((_, current)) => merit.better_than(current),
        };
        if better {
            best = Some((j, merit));
        }
    }
    let (joint, merit) = best.expect("at least one start is always present");
    if !merit.feasible {
        return Ok(None);
    }
    let v = conditional_from_joint(p, &joint);
    let point = bound_point(gram, rho, p, &v, &options.optimize)?;
    if point.rate_threshold >= r {
        // The merit evaluation and the final build use identical options,
        // so this can only fire on a genuine infeasibility at the margin.
        return Ok(None);
    }
    Ok(Some(point))
}

/// Feasible starting joints: interpolations between the independent
/// coupling (`V` rows equal to `P`) and the diagonal (identity `V`), plus
/// cyclic-shift mixtures when `P` is shift-invariant.
fn joint_starts(p: &Composition) -> Vec<DMatrix<f64>> {
    let n = p.len();
    let diag = DMatrix::from_fn(n, n, |x, y| if x == y { p.get(x) } else { 0.0 });
    let product = DMatrix::from_fn(n, n, |x, y| p.get(x) * p.get(y));
    let mut starts = Vec::new();
    for t in [1.0, 0.75, 0.5, 0.25, 0.05] {
        starts.push(&diag * (1.0 - t) + &product * t);
    }
    for k in 1..n.min(3) {
        let shift_invariant = (0..n).all(|x| (p.get(x) - p.get((x + k) % n)).abs() <= 1e-15);
        if !shift_invariant {
            continue;
        }
        let mut j = &diag * 0.5;
        for x in 0..n {
            j[(x, (x + k) % n)] += 0.5 * p.get(x);
        }
        starts.push(j);
    }
    starts
}

/// Rebuilds the conditional type from a joint, renormalizing each row by
/// its actual sum so rows are exactly stochastic. Inputs with `P(x) = 0`
/// get a self-loop row; they carry no weight anywhere downstream.
fn conditional_from_joint(p: &Composition, joint: &DMatrix<f64>) -> ConditionalType {
    let n = p.len();
    let mut rows = Vec::with_capacity(n);
    for x in 0..n {
        let sum: f64 = (0..n).map(|y| joint[(x, y)]).sum();
        if sum > 0.0 {
            rows.push((0..n).map(|y| joint[(x, y)] / sum).collect());
        } else {
            let mut row = vec![0.0; n];
            row[x] = 1.0;
            rows.push(row);
        }
    }
    ConditionalType::new(rows).expect("rows are normalized by construction")
}

/// Weighted theta values keyed by the exact bits of the weight row, so a
/// hit is indistinguishable from recomputation. Rows recur heavily inside
/// line searches: a 2x2 move touches two rows of the conditional type and
/// leaves the rest alone.
#[derive(Default)]
struct RowValueCache {
    map: Mutex<HashMap<Vec<u64>, f64>>,
}

impl RowValueCache {
    fn weighted_value(
        &self,
        gram: &GramMatrix,
        rho: f64,
        row: &Composition,
        options: &OptimizeOptions,
    ) -> Result<f64> {
        let key: Vec<u64> = row.as_slice().iter().map(|v| v.to_bits()).collect();
        if let Some(&value) = self.map.lock().unwrap().get(&key) {
            return Ok(value);
        }
        let value = optimize_theta_weighted(gram, rho, row, options)?.value;
        self.map.lock().unwrap().insert(key, value);
        Ok(value)
    }
}

/// Value-only counterpart of [`theta_pv`]: identical support order and
/// summation, so the result is bit-identical to the certified build that
/// the search winner gets afterwards.
fn theta_pv_value(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    v: &ConditionalType,
    options: &OptimizeOptions,
    cache: &RowValueCache,
) -> Result<f64> {
    let mut value = 0.0;
    for x in p.support() {
        value += p.get(x) * cache.weighted_value(gram, rho, v.row(x), options)?;
    }
    Ok(value)
}

fn evaluate_joint(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    r: f64,
    joint: &DMatrix<f64>,
    options: &SearchOptions,
    cache: &RowValueCache,
) -> Merit {
    let v = conditional_from_joint(p, joint);
    let Ok(theta) = theta_pv_value(gram, rho, p, &v, &options.optimize, cache) else {
        return Merit::WORST;
    };
    let Ok(mutual) = mutual_information(p, &v) else {
        return Merit::WORST;
    };
    let threshold = mutual + theta;
    if threshold < r {
        Merit {
            feasible: true,
            key: rho * theta,
        }
    } else {
        Merit {
            feasible: false,
            key: threshold - r,
        }
    }
}

fn descend_joint(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    r: f64,
    mut joint: DMatrix<f64>,
    options: &SearchOptions,
    cache: &RowValueCache,
) -> (DMatrix<f64>, Merit) {
    let n = p.len();
    let mut current = evaluate_joint(gram, rho, p, r, &joint, options, cache);
    for _ in 0..options.sweeps {
        let mut improved = false;
        for x1 in 0..n {
            for x2 in (x1 + 1)..n {
                for y1 in 0..n {
                    for y2 in 0..n {
                        if y1 == y2 {
                            continue;
                        }
                        // Exchange direction: delta added at (x1,y1) and
                        // (x2,y2), removed at (x1,y2) and (x2,y1). Both
                        // marginals are untouched for any delta.
                        let lo = -joint[(x1, y1)].min(joint[(x2, y2)]);
                        let hi = joint[(x1, y2)].min(joint[(x2, y1)]);
                        if hi - lo <= 1e-12 {
                            continue;
                        }
                        let apply = |j: &DMatrix<f64>, delta: f64| {
                            let mut out = j.clone();
                            out[(x1, y1)] = (out[(x1, y1)] + delta).max(0.0);
                            out[(x2, y2)] = (out[(x2, y2)] + delta).max(0.0);
                            out[(x1, y2)] = (out[(x1, y2)] - delta).max(0.0);
                            out[(x2, y1)] = (out[(x2, y1)] - delta).max(0.0);
                            out
                        };
                        let score = |delta: f64| {
                            evaluate_joint(gram, rho, p, r, &apply(&joint, delta), options, cache)
                        };

                        // Coarse grid over the move range.
                        let mut best_delta = 0.0;
                        let mut best = current;
                        let grid = options.line_grid.max(2);
                        for i in 0..grid {
                            let delta = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
                            let merit = score(delta);
                            if merit.better_than(&best) {
                                best = merit;
                                best_delta = delta;
                            }
                        }
                        // Golden-section refinement around the best grid
                        // point. The merit is discontinuous at the rate
                        // boundary, so the best evaluated point is kept
                        // rather than the final bracket midpoint.
                        let step = (hi - lo) / (grid - 1) as f64;
                        let mut a = (best_delta - step).max(lo);
                        let mut b = (best_delta + step).min(hi);
                        let phi = 0.5 * (5f64.sqrt() - 1.0);
                        let mut m1 = b - phi * (b - a);
                        let mut m2 = a + phi * (b - a);
                        let mut f1 = score(m1);
                        let mut f2 = score(m2);
                        for _ in 0..options.golden_iterations {
                            if f1.better_than(&best) {
                                best = f1;
                                best_delta = m1;
                            }
                            if f2.better_than(&best) {
                                best = f2;
                                best_delta = m2;
                            }
                            if f1.better_than(&f2) {
                                b = m2;
                                m2 = m1;
                                f2 = f1;
                                m1 = b - phi * (b - a);
                                f1 = score(m1);
                            } else {
                                a = m1;
                                m1 = m2;
                                f1 = f2;
                                m2 = a + phi * (b - a);
                                f2 = score(m2);
                            }
                        }

                        let crossed_into_feasible = best.feasible && !current.feasible;
                        let moved_enough = crossed_into_feasible
                            || current.key - best.key > options.improvement_tolerance;
                        if best.better_than(&current) && moved_enough {
                            joint = apply(&joint, best_delta);
                            current = best;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    (joint, current)
}

// ---------------------------------------------------------------------------
// Distance-rate curves
// ---------------------------------------------------------------------------

/// One rate on the curve. `distance_bound` is the envelope value, which may
/// come from a smaller rate (a bound valid above a threshold stays valid at
/// every larger rate); `source` records the bound point behind it, `None`
/// when no evaluated type met the rate condition.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub r: f64,
    /// Envelope value in nats; infinite when no bound applies at this rate.
    pub distance_bound: f64,
    pub source: Option<BoundPoint>,
}

/// Lower envelope of distance bounds over a degree grid, one point per
/// requested rate, nonincreasing in the rate by construction.
#[derive(Debug, Clone)]
pub struct DistanceBoundCurve {
    pub p: Composition,
    pub points: Vec<CurvePoint>,
}

/// Log-spaced default degree grid.
pub fn default_rho_grid() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 100.0, 1000.0, 10000.0]
}

/// Sweeps rates and degrees: each curve point takes the best bound over
/// the degree grid at its rate, and a running minimum over increasing
/// rates enforces the envelope shape exactly.
pub fn bound_curve(
    gram: &GramMatrix,
    p: &Composition,
    rho_grid: &[f64],
    r_grid: &[f64],
    options: &SearchOptions,
) -> Result<DistanceBoundCurve> {
    if rho_grid.is_empty() || r_grid.is_empty() {
        return Err(Error::InvalidInput(
            "degree and rate grids must be nonempty".into(),
        ));
    }
    if let Some(bad) = rho_grid.iter().find(|v| !(**v >= 1.0)) {
        return Err(Error::InvalidInput(format!(
            "degree grid entries must be at least 1, got {bad}"
        )));
    }
    if let Some(bad) = r_grid.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "rate grid entries must be positive, got {bad}"
        )));
    }
    if p.is_point_mass() {
        return Err(Error::InvalidInput(
            "composition is a point mass; the rate is 0 and the curve is vacuous".into(),
        ));
    }

    let mut rates: Vec<f64> = r_grid.to_vec();
    rates.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));

    let raw: Vec<Result<Option<BoundPoint>>> = par::map_slice(&rates, |&r| {
        let mut best: Option<BoundPoint> = None;
        for &rho in rho_grid {
            let Some(point) = search_v(gram, rho, p, r, options)? else {
                continue;
            };
            let better = match &best {
                None => true,
                Some(current) => point.distance_bound < current.distance_bound,
            };
            if better {
                best = Some(point);
            }
        }
        Ok(best)
    });

    let mut points = Vec::with_capacity(rates.len());
    let mut envelope = f64::INFINITY;
    let mut envelope_source: Option<BoundPoint> = None;
    for (i, result) in raw.into_iter().enumerate() {
        let best = result?;
        if let Some(point) = best {
            if point.distance_bound < envelope {
                envelope = point.distance_bound;
                envelope_source = Some(point);
            }
        }
        points.push(CurvePoint {
            r: rates[i],
            distance_bound: envelope,
            source: envelope_source.clone(),
        });
    }
    Ok(DistanceBoundCurve {
        p: p.clone(),
        points,
    })
}

impl DistanceBoundCurve {
    /// CSV with full-precision numbers, one row per rate. Rates with no
    /// applicable bound emit `inf` and empty provenance columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("R_nats,d_bound_nats,rho,V_flat,theta,mutual_info\n");
        for point in &self.points {
            match &point.source {
                Some(source) => {
                    let mut v_flat = String::new();
                    for x in 0..source.v.dim() {
                        for (y, value) in source.v.row(x).as_slice().iter().enumerate() {
                            if x + y > 0 {
                                v_flat.push(';');
                            }
                            v_flat.push_str(&format!("{value}"));
                        }
                    }
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        point.r,
                        point.distance_bound,
                        source.rho,
                        v_flat,
                        source.theta_pv_value,
                        source.mutual_info
                    ));
                }
                None => out.push_str(&format!("{},inf,,,,\n", point.r)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::{binary_entropy, binary_theta, elias_limit};
    use crate::channel::Channel;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn bsc_gram(p: f64) -> GramMatrix {
        Channel::binary_symmetric(p).unwrap().gram()
    }

    #[test]
    fn plotkin_rhs_is_one_at_theta_zero() {
        for m in [2usize, 3, 7] {
            assert_relative_eq!(
                finite_plotkin_rhs(m, 4, 0.0, 3.0).unwrap(),
                1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn plotkin_rhs_vacuous_regime_is_zero() {
        // M e^{-n theta} = 2 e^{-4} < 1.
        assert_eq!(finite_plotkin_rhs(2, 4, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(
            finite_plotkin_distance(2, 4, 1.0, 2.0).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn plotkin_rhs_matches_hand_evaluation() {
        // M = 4, n = 3, theta = -ln 0.8, rho = 1:
        // (4 * 0.8^3 - 1) / 3 = 1.048 / 3.
        let theta = -(0.8f64).ln();
        let rhs = finite_plotkin_rhs(4, 3, theta, 1.0).unwrap();
        assert_relative_eq!(rhs, (4.0 * 0.512 - 1.0) / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rhs, 0.349333, epsilon = 1e-6);
        // Degree 2 squares the base.
        let rhs2 = finite_plotkin_rhs(4, 3, theta, 2.0).unwrap();
        assert_relative_eq!(rhs2, rhs * rhs, epsilon = 1e-12);
    }

    #[test]
    fn plotkin_rhs_rejects_bad_inputs() {
        assert!(finite_plotkin_rhs(1, 3, 0.1, 1.0).is_err());
        assert!(finite_plotkin_rhs(4, 0, 0.1, 1.0).is_err());
        assert!(finite_plotkin_rhs(4, 3, -0.1, 1.0).is_err());
        assert!(finite_plotkin_rhs(4, 3, 0.1, 0.5).is_err());
    }

    #[test]
    fn marton_point_on_binary_channel_matches_closed_form() {
        let gram = bsc_gram(0.1);
        let p = Composition::uniform(2);
        let point =
            bound_point_marton(&gram, 1.0, &p, &OptimizeOptions::fast(7)).unwrap();
        // b01 = 0.6, so theta(1, uniform) = -ln((1 + 0.6)/2) = -ln 0.8.
        assert_relative_eq!(point.theta_pv_value, -(0.8f64).ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(point.mutual_info, 0.0, epsilon = 1e-12);
        assert_relative_eq!(point.rate_threshold, -(0.8f64).ln(), epsilon = 1e-6);
        assert_relative_eq!(point.distance_bound, -(0.8f64).ln(), epsilon = 1e-6);
        assert!(!point.degenerate);
    }

    #[test]
    fn flip_type_reproduces_elias_values_at_large_degree() {
        let gram = bsc_gram(0.1);
        let z = -gram.entry(0, 1).ln();
        let p = Composition::uniform(2);
        let lambda = 0.11;
        let v = ConditionalType::new(vec![
            vec![1.0 - lambda, lambda],
            vec![lambda, 1.0 - lambda],
        ])
        .unwrap();
        let point = bound_point(&gram, 1e4, &p, &v, &OptimizeOptions::fast(7)).unwrap();
        let (rate, distance) = elias_limit(lambda, z).unwrap();
        assert_relative_eq!(point.mutual_info, rate, epsilon = 1e-9);
        // rho * theta approaches the Elias distance from below, within 1%
        // at rho = 1e4.
        assert!(point.distance_bound <= distance + 1e-9);
        assert_relative_eq!(point.distance_bound, distance, max_relative = 0.01);
        assert_relative_eq!(
            point.rate_threshold,
            rate + point.theta_pv_value,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identity_type_gives_zero_bound_at_full_rate() {
        let gram = bsc_gram(0.1);
        let p = Composition::uniform(2);
        let v = ConditionalType::identity(2);
        let point = bound_point(&gram, 5.0, &p, &v, &OptimizeOptions::fast(7)).unwrap();
        assert!(point.distance_bound.abs() <= 1e-10);
        assert_relative_eq!(point.mutual_info, 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn bound_point_rejects_non_stationary_type() {
        let gram = bsc_gram(0.1);
        let p = Composition::new(vec![0.7, 0.3]).unwrap();
        let v = ConditionalType::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        match bound_point(&gram, 1.0, &p, &v, &OptimizeOptions::fast(7)) {
            Err(Error::NotStationary { residual }) => assert!(residual > 0.5),
            other => panic!("expected a stationarity error, got {other:?}"),
        }
    }

    #[test]
    fn product_type_specialization_is_bit_exact() {
        use rand::RngExt;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        for _ in 0..3 {
            let nx = 2 + (rng.random::<u64>() % 3) as usize;
            let ny = nx + 1;
            let mut rows = Vec::new();
            for _ in 0..nx {
                let mut row: Vec<f64> =
                    (0..ny).map(|_| rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                let correction: f64 = 1.0 - row.iter().sum::<f64>();
                row[0] += correction;
                rows.push(row);
            }
            let channel = Channel::new(rows).unwrap();
            let gram = channel.gram();
            let mut weights: Vec<f64> = (0..nx).map(|_| rng.random::<f64>() + 0.1).collect();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|v| *v /= sum);
            let correction: f64 = 1.0 - weights.iter().sum::<f64>();
            weights[0] += correction;
            let p = Composition::new(weights).unwrap();

            let options = OptimizeOptions::fast(7);
            let direct = bound_point(
                &gram,
                2.0,
                &p,
                &ConditionalType::from_rows_equal(&p),
                &options,
            )
            .unwrap();
            let marton = bound_point_marton(&gram, 2.0, &p, &options).unwrap();
            assert_eq!(
                direct.theta_pv_value.to_bits(),
                marton.theta_pv_value.to_bits()
            );
            assert_eq!(
                direct.rate_threshold.to_bits(),
                marton.rate_threshold.to_bits()
            );
            assert_eq!(
                direct.distance_bound.to_bits(),
                marton.distance_bound.to_bits()
            );
            for (a, b) in direct
                .certificates
                .per_input
                .iter()
                .zip(marton.certificates.per_input.iter())
            {
                assert_eq!(a.certificate.value.to_bits(), b.certificate.value.to_bits());
                assert_eq!(
                    a.certificate.representation.as_matrix(),
                    b.certificate.representation.as_matrix()
                );
            }
        }
    }

    #[test]
    fn search_finds_near_elias_bound_on_binary_channel() {
        let gram = bsc_gram(0.1);
        let z = -gram.entry(0, 1).ln();
        let p = Composition::uniform(2);
        let r = 0.40;
        let point = search_v(&gram, 1e4, &p, r, &SearchOptions::coarse(7))
            .unwrap()
            .expect("a feasible type exists at this rate");
        assert!(point.rate_threshold < r);
        // Elias value at the rate: lambda solves ln 2 - h(lambda) = R.
        let mut lo = 1e-9;
        let mut hi = 0.5;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2f64.ln() - binary_entropy(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        let elias = 2.0 * lambda * (1.0 - lambda) * z;
        assert!(point.distance_bound <= 0.1005f64.max(elias * 1.02));
        assert_relative_eq!(point.distance_bound, elias, max_relative = 0.03);
    }

    #[test]
    fn search_returns_none_below_attainable_rates() {
        let gram = bsc_gram(0.1);
        let p = Composition::uniform(2);
        let found = search_v(&gram, 1.0, &p, 0.01, &SearchOptions::coarse(7)).unwrap();
        assert!(found.is_none());
    }

    #[test]
    fn search_rejects_nonpositive_rate() {
        let gram = bsc_gram(0.1);
        let p = Composition::uniform(2);
        assert!(search_v(&gram, 1.0, &p, 0.0, &SearchOptions::coarse(7)).is_err());
    }

    #[test]
    fn curve_envelope_is_nonincreasing_and_tracks_elias() {
        let gram = bsc_gram(0.1);
        let z = -gram.entry(0, 1).ln();
        let p = Composition::uniform(2);
        let curve = bound_curve(
            &gram,
            &p,
            &[10.0, 1e4],
            &[0.2, 0.4],
            &SearchOptions::coarse(7),
        )
        .unwrap();
        assert_eq!(curve.points.len(), 2);
        assert!(curve.points[1].distance_bound <= curve.points[0].distance_bound + 1e-12);
        for point in &curve.points {
            let mut lo = 1e-9;
            let mut hi = 0.5;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 2f64.ln() - binary_entropy(mid) > point.r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let lambda = 0.5 * (lo + hi);
            let elias = 2.0 * lambda * (1.0 - lambda) * z;
            assert_relative_eq!(point.distance_bound, elias, max_relative = 0.05);
        }
    }

    #[test]
    fn curve_rejects_degenerate_inputs() {
        let gram = bsc_gram(0.1);
        let p = Composition::uniform(2);
        let options = SearchOptions::coarse(7);
        assert!(bound_curve(&gram, &p, &[], &[0.3], &options).is_err());
        assert!(bound_curve(&gram, &p, &[1.0], &[], &options).is_err());
        assert!(bound_curve(&gram, &p, &[0.5], &[0.3], &options).is_err());
        assert!(bound_curve(&gram, &p, &[1.0], &[-0.1], &options).is_err());
        let point_mass = Composition::point_mass(2, 0);
        assert!(bound_curve(&gram, &point_mass, &[1.0], &[0.3], &options).is_err());
    }

    #[test]
    fn csv_has_contracted_header_and_one_row_per_rate() {
        let gram = bsc_gram(0.1);
        let p = Composition::uniform(2);
        let curve = bound_curve(&gram, &p, &[10.0], &[0.3, 0.5], &SearchOptions::coarse(7))
            .unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "R_nats,d_bound_nats,rho,V_flat,theta,mutual_info"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert_eq!(row.split(',').count(), 6);
            let v_flat = row.split(',').nth(3).unwrap();
            assert_eq!(v_flat.split(';').count(), 4);
        }
    }

    #[test]
    fn closed_form_certifies_binary_search_results() {
        // The searched bound at any feasible flip type can never improve on
        // the closed-form value at the same weights; spot-check the search
        // output against the analytic evaluation of its own type.
        let gram = bsc_gram(0.2);
        let z = -gram.entry(0, 1).ln();
        let p = Composition::uniform(2);
        let point = search_v(&gram, 100.0, &p, 0.35, &SearchOptions::coarse(7))
            .unwrap()
            .expect("feasible at this rate");
        let mut expected = 0.0;
        for item in &point.certificates.per_input {
            let q = point.v.row(item.input);
            let analytic = binary_theta(z, 100.0, q).unwrap();
            expected += item.weight * analytic.value;
        }
        assert_relative_eq!(point.theta_pv_value, expected, epsilon = 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn plotkin_rhs_lies_in_unit_interval_and_shrinks_with_theta(
            m in 2usize..6,
            n in 1usize..6,
            rho in 1.0f64..8.0,
            theta in 0.0f64..2.0,
            bump in 0.0f64..0.5,
        ) {
            let base = finite_plotkin_rhs(m, n, theta, rho).unwrap();
            let bumped = finite_plotkin_rhs(m, n, theta + bump, rho).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(bumped <= base + 1e-12);
        }
    }
}
