//! Multi-start penalized optimization of representations.
//!
//! Each start descends an augmented-Lagrangian merit on the product of unit
//! spheres: the objective (weighted log score, or a temperature-annealed
//! softmax standing in for the max) plus penalty terms for the pairwise cap
//! constraints. Handles move by safeguarded fixed-point steps, vectors by
//! projected gradient steps with renormalization. Every start is finished
//! the same way: repair any cap violation at the Gram level, then attach
//! the exact best handle for the final vectors. The cheapest sound
//! candidate across all starts wins.
//!
//! Structured starts come first: the exact factorization of the cap matrix
//! when it is positive semidefinite, its eigenvalue-shrunk factorization
//! otherwise, the orthonormal basis (always feasible), and the caller's
//! warm start. Random starts follow, seeded as `options.seed + index`, so
//! the whole procedure is deterministic for a fixed seed regardless of
//! thread count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{factor_psd, smallest_eigenvalue, Composition, GramMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::theta::{
    evaluate_objective, weighted_handle_fixed_point, Handle, ObjectiveKind, OptimizeOptions,
    Representation, ThetaCertificate,
};
use crate::tol;

/// Minimizes the minimax objective `max_x ln 1/<u_x, f>^2` over feasible
/// representations and handles.
///
/// The returned certificate is always a sound upper bound; optimality is
/// best-effort over the configured starts.
pub fn optimize_theta(
    gram: &GramMatrix,
    rho: f64,
    options: &OptimizeOptions,
) -> Result<ThetaCertificate> {
    optimize(gram, rho, Goal::Minimax, options)
}

/// Minimizes the weighted objective `sum_x Q(x) ln 1/<u_x, f>^2`.
pub fn optimize_theta_weighted(
    gram: &GramMatrix,
    rho: f64,
    q: &Composition,
    options: &OptimizeOptions,
) -> Result<ThetaCertificate> {
    if q.len() != gram.dim() {
        return Err(Error::InvalidInput(format!(
            "weights have length {} but the channel has {} inputs",
            q.len(),
            gram.dim()
        )));
    }
    optimize(gram, rho, Goal::Weighted(q), options)
}

#[derive(Clone, Copy)]
enum Goal<'a> {
    Minimax,
    Weighted(&'a Composition),
}

impl Goal<'_> {
    fn objective_kind(&self) -> ObjectiveKind {
        match self {
            Goal::Minimax => ObjectiveKind::Minimax,
            Goal::Weighted(q) => ObjectiveKind::Weighted((*q).clone()),
        }
    }
}

struct Candidate {
    vectors: DMatrix<f64>,
    handle: Handle,
    value: f64,
    residual: f64,
    converged: bool,
}

fn optimize(
    gram: &GramMatrix,
    rho: f64,
    goal: Goal<'_>,
    options: &OptimizeOptions,
) -> Result<ThetaCertificate> {
    if !rho.is_finite() || rho < 1.0 {
        return Err(Error::InvalidInput(format!(
            "degree rho must be a finite value >= 1, got {rho}"
        )));
    }
    let n = gram.dim();
    let caps = gram.caps(rho);

    // Structured starts, then seeded random starts.
    let mut starts: Vec<(DMatrix<f64>, Option<Handle>)> = Vec::new();
    let caps_eig = smallest_eigenvalue(&caps);
    if caps_eig >= -tol::PSD_EIG {
        starts.push((factor_psd(&caps), None));
    } else {
        starts.push((shrunk_caps_vectors(&caps, caps_eig), None));
    }
    starts.push((DMatrix::identity(n, n), None));
    if let Some(warm) = &options.warm_start {
        if warm.representation.num_vectors() != n {
            return Err(Error::InvalidInput(format!(
                "warm start has {} vectors but the channel has {n} inputs",
                warm.representation.num_vectors()
            )));
        }
        starts.push((
            warm.representation.as_matrix().clone(),
            warm.handle.clone(),
        ));
    }
    for r in 0..options.restarts {
        starts.push((
            random_unit_columns(n, options.seed.wrapping_add(r as u64)),
            None,
        ));
    }

    let restarts_used = starts.len();
    let candidate_lists: Vec<Vec<Candidate>> = par::map_slice(&starts, |(vectors, hint)| {
        run_start(vectors, hint.as_ref(), &caps, goal, rho, options)
    });

    let mut best: Option<Candidate> = None;
    for list in candidate_lists {
        for candidate in list {
            let better = match &best {
                None => true,
                Some(current) => candidate.value < current.value,
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::Optimizer(
            "no start produced a feasible certificate; this indicates a bug because \
             the orthonormal basis is always feasible"
                .into(),
        )
    })?;

    let representation = Representation::from_columns(best.vectors, rho)?;
    let certificate = ThetaCertificate {
        value: best.value,
        feasibility_residual: best.residual,
        objective: goal.objective_kind(),
        restarts_used,
        converged: best.converged,
        seed: options.seed,
        representation,
        handle: best.handle,
    };
    debug_assert!(certificate.audit(gram).is_ok());
    Ok(certificate)
}

/// Produces up to two candidates from one start: the start itself with an
/// exact handle (structured starts are often already optimal), and its
/// penalized refinement.
fn run_start(
    vectors: &DMatrix<f64>,
    handle_hint: Option<&Handle>,
    caps: &DMatrix<f64>,
    goal: Goal<'_>,
    rho: f64,
    options: &OptimizeOptions,
) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(2);
    if let Some(candidate) = finalize(vectors.clone(), handle_hint, caps, goal, rho, options, true)
    {
        out.push(candidate);
    }
    // A zero iteration budget means polish-only mode: the descent would
    // return the start unchanged, so skip the duplicate finalize pass.
    if options.max_iterations > 0 {
        let (refined, converged) = descend(vectors.clone(), caps, goal, options);
        if let Some(candidate) = finalize(refined, handle_hint, caps, goal, rho, options, converged)
        {
            out.push(candidate);
        }
    }
    out
}

/// Repairs feasibility if needed and attaches the best handle found for the
/// final vectors. Returns `None` when no valid handle exists, which simply
/// drops this candidate.
fn finalize(
    vectors: DMatrix<f64>,
    handle_hint: Option<&Handle>,
    caps: &DMatrix<f64>,
    goal: Goal<'_>,
    rho: f64,
    options: &OptimizeOptions,
    converged: bool,
) -> Option<Candidate> {
    let mut vectors = vectors;
    let mut residual = residual_against_caps(&vectors, caps);
    if residual > options.feasibility_tolerance {
        vectors = repair(&vectors, caps);
        residual = residual_against_caps(&vectors, caps);
        if residual > options.feasibility_tolerance {
            return None;
        }
    }
    let rep = Representation::from_columns(vectors, rho).ok()?;
    let kind = goal.objective_kind();

    let mut best: Option<(Handle, f64)> = None;
    let mut consider = |handle: Handle| {
        if let Ok(value) = evaluate_objective(&rep, &handle, &kind) {
            if best.as_ref().is_none_or(|(_, v)| value < *v) {
                best = Some((handle, value));
            }
        }
    };
    match goal {
        Goal::Minimax => {
            if let Ok((handle, _)) = super::value_minimax(&rep) {
                consider(handle);
            }
        }
        Goal::Weighted(q) => {
            if let Ok(handle) = weighted_handle_fixed_point(&rep, q, handle_hint) {
                consider(handle);
            }
        }
    }
    if let Some(hint) = handle_hint {
        consider(hint.clone());
    }
    let (handle, value) = best?;
    Some(Candidate {
        vectors: rep.as_matrix().clone(),
        handle,
        value,
        residual,
        converged,
    })
}

fn residual_against_caps(vectors: &DMatrix<f64>, caps: &DMatrix<f64>) -> f64 {
    let n = vectors.ncols();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            let inner = vectors.column(x).dot(&vectors.column(y));
            worst = worst.max(inner.abs() - caps[(x, y)]);
        }
    }
    worst.max(0.0)
}

/// Eliminates cap violations at the Gram level: clip the offending inner
/// products to their caps, restore positive semidefiniteness by shrinking
/// toward the identity (which never re-violates a cap), and refactor.
fn repair(vectors: &DMatrix<f64>, caps: &DMatrix<f64>) -> DMatrix<f64> {
    let n = vectors.ncols();
    let mut g = vectors.transpose() * vectors;
    for x in 0..n {
        g[(x, x)] = 1.0;
        for y in (x + 1)..n {
            let clipped = g[(x, y)].clamp(-caps[(x, y)], caps[(x, y)]);
            g[(x, y)] = clipped;
            g[(y, x)] = clipped;
        }
    }
    let min_eig = smallest_eigenvalue(&g);
    if min_eig < 0.0 {
        let s = -min_eig + 1e-12;
        let scale = 1.0 / (1.0 + s);
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    g[(x, y)] *= scale;
                }
            }
        }
    }
    factor_psd(&g)
}

/// Shrinks the cap matrix toward the identity until it is positive
/// semidefinite and factorizes it. This is the most correlated feasible
/// Gram along the identity ray and makes a strong start when the caps
/// themselves are indefinite.
fn shrunk_caps_vectors(caps: &DMatrix<f64>, caps_eig: f64) -> DMatrix<f64> {
    let n = caps.nrows();
    let s = (-caps_eig).max(0.0) + 1e-12;
    let scale = 1.0 / (1.0 + s);
    let mut h = caps.clone();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                h[(x, y)] *= scale;
            }
        }
    }
    factor_psd(&h)
}

fn random_unit_columns(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        loop {
            for i in 0..n {
                m[(i, x)] = StandardNormal.sample(&mut rng);
            }
            let norm = m.column(x).norm();
            if norm > 1e-6 {
                for i in 0..n {
                    m[(i, x)] /= norm;
                }
                break;
            }
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Augmented-Lagrangian descent
// ---------------------------------------------------------------------------

/// Iterations between multiplier, penalty, and temperature updates.
const UPDATE_PERIOD: usize = 250;
/// Geometric temperature schedule for the softmax smoothing of the max.
const TAU_START: f64 = 0.5;
const TAU_FLOOR: f64 = 1e-3;
const MU_START: f64 = 10.0;
const MU_CAP: f64 = 1e8;
/// Inner products are clamped away from zero inside logarithms and
/// divisions; the objective is effectively a wall there anyway.
const INNER_FLOOR: f64 = 1e-9;

struct PenaltyState {
    lambda: Vec<f64>,
    mu: f64,
}

impl PenaltyState {
    /// Augmented-Lagrangian term for one inequality `s <= 0` with slack
    /// `s = |<u_x,u_y>| - cap`.
    fn term(&self, pair: usize, s: f64) -> f64 {
        let a = (self.lambda[pair] + self.mu * s).max(0.0);
        (a * a - self.lambda[pair] * self.lambda[pair]) / (2.0 * self.mu)
    }

    /// Derivative of [`PenaltyState::term`] in `s`.
    fn force(&self, pair: usize, s: f64) -> f64 {
        (self.lambda[pair] + self.mu * s).max(0.0)
    }
}

fn pair_index(n: usize, x: usize, y: usize) -> usize {
    // x < y; row-major upper triangle.
    x * n - x * (x + 1) / 2 + (y - x - 1)
}

fn descend(
    mut u: DMatrix<f64>,
    caps: &DMatrix<f64>,
    goal: Goal<'_>,
    options: &OptimizeOptions,
) -> (DMatrix<f64>, bool) {
    let n = u.ncols();
    if n < 2 {
        return (u, true);
    }
    let mut f = initial_handle(&u, goal);
    flip_toward(&mut u, &f);

    let mut penalty = PenaltyState {
        lambda: vec![0.0; n * (n - 1) / 2],
        mu: MU_START,
    };
    let mut tau = TAU_START;
    let mut lr = 0.05_f64;
    let mut best_tracked = f64::INFINITY;
    let mut since_best = 0usize;
    let mut prev_worst_violation = f64::INFINITY;
    let mut converged = false;

    for it in 0..options.max_iterations {
        // Handle update at the current smoothing weights.
        let inners = u.transpose() * &f;
        let w = smoothing_weights(goal, &inners, tau);
        handle_step(&mut f, &u, &w, goal, tau);
        flip_toward(&mut u, &f);

        // Projected gradient step on the vectors with backtracking.
        let merit_now = merit(&u, &f, caps, goal, tau, &penalty);
        let grads = vector_gradients(&u, &f, caps, goal, tau, &penalty);
        let grad_norm_sq: f64 = grads.iter().map(|g| g.norm_squared()).sum();
        if grad_norm_sq.is_finite() && grad_norm_sq > 0.0 {
            let mut accepted = false;
            for _ in 0..30 {
                let trial = step_on_spheres(&u, &grads, lr);
                let merit_trial = merit(&trial, &f, caps, goal, tau, &penalty);
                if merit_trial <= merit_now - 1e-4 * lr * grad_norm_sq {
                    u = trial;
                    lr = (lr * 1.25).min(0.5);
                    accepted = true;
                    break;
                }
                lr *= 0.5;
                if lr < 1e-14 {
                    break;
                }
            }
            if !accepted {
                lr = (lr * 4.0).clamp(1e-12, 0.05);
            }
        }

        // Stall detection on the exact objective plus a fixed-weight
        // violation term, so both must settle before we stop.
        let worst_violation = worst_violation(&u, caps);
        let tracked = exact_objective(&u, &f, goal) + 1e6 * worst_violation;
        if tracked < best_tracked - options.stall_improvement {
            best_tracked = tracked;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= options.stall_window
            && worst_violation <= options.feasibility_tolerance.min(1e-10)
        {
            converged = true;
            break;
        }

        if (it + 1) % UPDATE_PERIOD == 0 {
            for x in 0..n {
                for y in (x + 1)..n {
                    let s = u.column(x).dot(&u.column(y)).abs() - caps[(x, y)];
                    let pair = pair_index(n, x, y);
                    penalty.lambda[pair] = (penalty.lambda[pair] + penalty.mu * s).max(0.0);
                }
            }
            if worst_violation > 0.25 * prev_worst_violation {
                penalty.mu = (penalty.mu * 4.0).min(MU_CAP);
            }
            prev_worst_violation = worst_violation;
            tau = (tau * 0.5).max(TAU_FLOOR);
        }
    }
    flip_toward(&mut u, &f);
    (u, converged)
}

fn initial_handle(u: &DMatrix<f64>, goal: Goal<'_>) -> DVector<f64> {
    let n = u.ncols();
    let mut f = DVector::zeros(u.nrows());
    for x in 0..n {
        let w = match goal {
            Goal::Minimax => 1.0 / n as f64,
            Goal::Weighted(q) => q.get(x),
        };
        f += u.column(x) * w;
    }
    let norm = f.norm();
    if norm > 1e-9 {
        f / norm
    } else {
        let mut e = DVector::zeros(u.nrows());
        e[0] = 1.0;
        e
    }
}

fn flip_toward(u: &mut DMatrix<f64>, f: &DVector<f64>) {
    for x in 0..u.ncols() {
        if u.column(x).dot(f) < 0.0 {
            for i in 0..u.nrows() {
                u[(i, x)] = -u[(i, x)];
            }
        }
    }
}

/// Per-vector weights of the smoothed objective: the input weights for the
/// weighted goal, softmax weights at temperature `tau` for minimax.
fn smoothing_weights(goal: Goal<'_>, inners: &DVector<f64>, tau: f64) -> Vec<f64> {
    match goal {
        Goal::Weighted(q) => q.as_slice().to_vec(),
        Goal::Minimax => {
            let g: Vec<f64> = inners
                .iter()
                .map(|&d| {
                    let d = d.max(INNER_FLOOR);
                    -(d * d).ln()
                })
                .collect();
            let m = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut w: Vec<f64> = g.iter().map(|&v| ((v - m) / tau).exp()).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            w
        }
    }
}

/// One safeguarded fixed-point step `f <- normalize(sum_x w_x u_x / d_x)`,
/// kept only if it does not worsen the smoothed objective.
fn handle_step(f: &mut DVector<f64>, u: &DMatrix<f64>, w: &[f64], goal: Goal<'_>, tau: f64) {
    let inners = u.transpose() * &*f;
    let mut t = DVector::zeros(u.nrows());
    for x in 0..u.ncols() {
        if w[x] == 0.0 {
            continue;
        }
        t += u.column(x) * (w[x] / inners[x].max(INNER_FLOOR));
    }
    let norm = t.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return;
    }
    let full = t / norm;
    let current = smoothed_objective(u, f, goal, tau);
    for damping in [1.0, 0.3] {
        let trial = &*f + (&full - &*f) * damping;
        let trial_norm = trial.norm();
        if trial_norm > 0.0 {
            let trial = trial / trial_norm;
            if smoothed_objective(u, &trial, goal, tau) <= current + 1e-12 {
                *f = trial;
                return;
            }
        }
    }
}

fn smoothed_objective(u: &DMatrix<f64>, f: &DVector<f64>, goal: Goal<'_>, tau: f64) -> f64 {
    let inners = u.transpose() * f;
    let g = |x: usize| {
        let d = inners[x].max(INNER_FLOOR);
        -(d * d).ln()
    };
    match goal {
        Goal::Weighted(q) => (0..u.ncols()).map(|x| q.get(x) * g(x)).sum(),
        Goal::Minimax => {
            let values: Vec<f64> = (0..u.ncols()).map(g).collect();
            let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + tau * values.iter().map(|&v| ((v - m) / tau).exp()).sum::<f64>().ln()
        }
    }
}

fn exact_objective(u: &DMatrix<f64>, f: &DVector<f64>, goal: Goal<'_>) -> f64 {
    let inners = u.transpose() * f;
    let g = |x: usize| {
        let d = inners[x].max(INNER_FLOOR);
        -(d * d).ln()
    };
    match goal {
        Goal::Weighted(q) => (0..u.ncols()).map(|x| q.get(x) * g(x)).sum(),
        Goal::Minimax => (0..u.ncols())
            .map(g)
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

fn worst_violation(u: &DMatrix<f64>, caps: &DMatrix<f64>) -> f64 {
    residual_against_caps(u, caps)
}

fn merit(
    u: &DMatrix<f64>,
    f: &DVector<f64>,
    caps: &DMatrix<f64>,
    goal: Goal<'_>,
    tau: f64,
    penalty: &PenaltyState,
) -> f64 {
    let n = u.ncols();
    let mut total = smoothed_objective(u, f, goal, tau);
    for x in 0..n {
        for y in (x + 1)..n {
            let s = u.column(x).dot(&u.column(y)).abs() - caps[(x, y)];
            total += penalty.term(pair_index(n, x, y), s);
        }
    }
    total
}

fn vector_gradients(
    u: &DMatrix<f64>,
    f: &DVector<f64>,
    caps: &DMatrix<f64>,
    goal: Goal<'_>,
    tau: f64,
    penalty: &PenaltyState,
) -> Vec<DVector<f64>> {
    let n = u.ncols();
    let inners = u.transpose() * f;
    let w = smoothing_weights(goal, &inners, tau);
    let mut grads: Vec<DVector<f64>> = Vec::with_capacity(n);
    for x in 0..n {
        let d = inners[x].max(INNER_FLOOR);
        let mut g = f * (-2.0 * w[x] / d);
        for y in 0..n {
            if y == x {
                continue;
            }
            let inner = u.column(x).dot(&u.column(y));
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            let s = inner.abs() - caps[(lo, hi)];
            let force = penalty.force(pair_index(n, lo, hi), s);
            if force > 0.0 {
                g += u.column(y) * (force * inner.signum());
            }
        }
        // Riemannian projection onto the tangent space of the sphere.
        let radial = g.dot(&u.column(x).into_owned());
        g -= u.column(x) * radial;
        grads.push(g);
    }
    grads
}

fn step_on_spheres(u: &DMatrix<f64>, grads: &[DVector<f64>], lr: f64) -> DMatrix<f64> {
    let mut out = u.clone();
    for x in 0..u.ncols() {
        let stepped = u.column(x) - &grads[x] * lr;
        let norm = stepped.norm();
        if norm > 0.0 && norm.is_finite() {
            out.set_column(x, &(stepped / norm));
        }
    }
    out
}
