//! Degree-`rho` orthonormal representations and their certified values.
//!
//! A representation assigns a unit vector to every input letter subject to
//! pairwise caps `|<u_x, u_y>| <= B[x][y]^(1/rho)`. Together with a unit
//! handle `f` it certifies an upper bound on the channel's theta value:
//! the minimax objective is `max_x ln 1/<u_x, f>^2`, the weighted objective
//! replaces the max by an average under input weights `Q`. Any feasible
//! pair (representation, handle) yields a sound bound, so certificates are
//! checkable without trusting the optimizer that produced them.

mod mnp;
mod optimize;

pub use optimize::{optimize_theta, optimize_theta_weighted};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{Composition, ConditionalType, GramMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::tol;

/// Default RNG seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 7;

// ---------------------------------------------------------------------------
// Representation and handle
// ---------------------------------------------------------------------------

/// Unit vectors for every input letter, one column each, in dimension
/// equal to the alphabet size.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    vectors: DMatrix<f64>,
    rho: f64,
}

impl Representation {
    /// Validates that the matrix is square with unit columns (within
    /// [`tol::UNIT_NORM`]) and that the degree is at least one.
    pub fn from_columns(vectors: DMatrix<f64>, rho: f64) -> Result<Self> {
        if vectors.nrows() != vectors.ncols() || vectors.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "representation must be square ({} vectors in the same dimension), got {}x{}",
                vectors.ncols(),
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if !rho.is_finite() || rho < 1.0 {
            return Err(Error::InvalidInput(format!(
                "degree rho must be a finite value >= 1, got {rho}"
            )));
        }
        for x in 0..vectors.ncols() {
            let norm = vectors.column(x).norm();
            if (norm - 1.0).abs() > tol::UNIT_NORM {
                return Err(Error::InvalidInput(format!(
                    "representation vector {x} has norm {norm}, not unit"
                )));
            }
        }
        Ok(Self { vectors, rho })
    }

    pub fn num_vectors(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn vector(&self, x: usize) -> DVector<f64> {
        self.vectors.column(x).into_owned()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Gram matrix of the representation vectors (not of the channel).
    pub fn gram(&self) -> DMatrix<f64> {
        self.vectors.transpose() * &self.vectors
    }

    fn inner_products(&self, handle: &Handle) -> DVector<f64> {
        self.vectors.transpose() * handle.as_vector()
    }
}

/// A unit vector against which representation vectors are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Handle(DVector<f64>);

impl Handle {
    pub fn new(f: DVector<f64>) -> Result<Self> {
        let norm = f.norm();
        if (norm - 1.0).abs() > tol::UNIT_NORM {
            return Err(Error::InvalidInput(format!(
                "handle has norm {norm}, not unit"
            )));
        }
        Ok(Self(f))
    }

    fn from_unnormalized(f: DVector<f64>) -> Result<Self> {
        let norm = f.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Optimizer(
                "handle direction degenerated to the zero vector".into(),
            ));
        }
        Ok(Self(f / norm))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

// ---------------------------------------------------------------------------
// Objectives and evaluation
// ---------------------------------------------------------------------------

/// Which objective a certificate's value refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `max_x ln 1/<u_x, f>^2`
    Minimax,
    /// `sum_x Q(x) ln 1/<u_x, f>^2`
    Weighted(Composition),
}

/// Worst violation of the pairwise caps: `max over x < y` of
/// `max(0, |<u_x, u_y>| - B[x][y]^(1/rho))`. Zero means exactly feasible.
pub fn feasibility_residual(rep: &Representation, gram: &GramMatrix) -> Result<f64> {
    if rep.num_vectors() != gram.dim() {
        return Err(Error::InvalidInput(format!(
            "representation has {} vectors but the gram matrix has {} inputs",
            rep.num_vectors(),
            gram.dim()
        )));
    }
    let caps = gram.caps(rep.rho());
    let g = rep.gram();
    let mut worst: f64 = 0.0;
    for x in 0..gram.dim() {
        for y in (x + 1)..gram.dim() {
            worst = worst.max(g[(x, y)].abs() - caps[(x, y)]);
        }
    }
    Ok(worst.max(0.0))
}

/// Evaluates an objective at a fixed (representation, handle) pair.
///
/// Minimax requires every inner product positive; the weighted form only
/// needs positivity on the support of `Q`.
pub fn evaluate_objective(
    rep: &Representation,
    handle: &Handle,
    objective: &ObjectiveKind,
) -> Result<f64> {
    let inners = rep.inner_products(handle);
    match objective {
        ObjectiveKind::Minimax => {
            let mut worst = f64::NEG_INFINITY;
            for x in 0..rep.num_vectors() {
                if inners[x] <= 0.0 {
                    return Err(Error::Optimizer(format!(
                        "handle has nonpositive inner product {} with vector {x}",
                        inners[x]
                    )));
                }
                worst = worst.max(-(inners[x] * inners[x]).ln());
            }
            Ok(worst.max(0.0))
        }
        ObjectiveKind::Weighted(q) => {
            if q.len() != rep.num_vectors() {
                return Err(Error::InvalidInput(format!(
                    "weights have length {} but the representation has {} vectors",
                    q.len(),
                    rep.num_vectors()
                )));
            }
            let mut total = 0.0;
            for x in 0..rep.num_vectors() {
                let w = q.get(x);
                if w == 0.0 {
                    continue;
                }
                if inners[x] <= 0.0 {
                    return Err(Error::Optimizer(format!(
                        "handle has nonpositive inner product {} with vector {x} of weight {w}",
                        inners[x]
                    )));
                }
                total += w * -(inners[x] * inners[x]).ln();
            }
            Ok(total.max(0.0))
        }
    }
}

/// Best minimax handle for a fixed representation, found exactly as the
/// normalized minimum-norm point of the vectors' convex hull.
///
/// Fails when the hull contains the origin, since then no handle has
/// positive inner products with every vector.
pub fn value_minimax(rep: &Representation) -> Result<(Handle, f64)> {
    let gram = rep.gram();
    let (p, value) = mnp::min_quadratic_over_simplex(&gram);
    if value <= 1e-14 {
        return Err(Error::Optimizer(
            "the representation's convex hull contains the origin; no handle has \
             positive inner products with every vector"
                .into(),
        ));
    }
    let handle = Handle::from_unnormalized(rep.as_matrix() * p)?;
    let value = evaluate_objective(rep, &handle, &ObjectiveKind::Minimax)?;
    Ok((handle, value))
}

/// Best weighted handle for a fixed representation via the fixed-point
/// iteration `f <- normalize(sum_x Q(x) u_x / <u_x, f>)`, safeguarded so the
/// weighted log-objective never decreases.
///
/// The returned handle satisfies the fixed-point condition within
/// [`tol::HANDLE_STATIONARY`].
pub fn value_weighted(rep: &Representation, q: &Composition) -> Result<(Handle, f64)> {
    if q.len() != rep.num_vectors() {
        return Err(Error::InvalidInput(format!(
            "weights have length {} but the representation has {} vectors",
            q.len(),
            rep.num_vectors()
        )));
    }
    let support = q.support();
    if support.is_empty() {
        return Err(Error::InvalidComposition("empty support".into()));
    }
    if support.len() == 1 {
        // A point mass is certified by the vector itself.
        let handle = Handle::from_unnormalized(rep.vector(support[0]))?;
        let value = evaluate_objective(rep, &handle, &ObjectiveKind::Weighted(q.clone()))?;
        return Ok((handle, value));
    }

    let handle = weighted_handle_fixed_point(rep, q, None)?;
    let value = evaluate_objective(rep, &handle, &ObjectiveKind::Weighted(q.clone()))?;
    Ok((handle, value))
}

/// Log-likelihood style score maximized by the weighted handle.
fn weighted_score(rep: &Representation, q: &Composition, f: &DVector<f64>) -> f64 {
    let inners = rep.as_matrix().transpose() * f;
    let mut score = 0.0;
    for x in 0..rep.num_vectors() {
        let w = q.get(x);
        if w == 0.0 {
            continue;
        }
        if inners[x] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        score += w * inners[x].ln();
    }
    score
}

/// Runs the safeguarded fixed-point iteration for the weighted handle.
/// `init` can carry a warm handle; otherwise the minimum-norm-point handle
/// seeds the iteration (it has positive inner products with every vector).
pub(crate) fn weighted_handle_fixed_point(
    rep: &Representation,
    q: &Composition,
    init: Option<&Handle>,
) -> Result<Handle> {
    let n = rep.num_vectors();
    let vectors = rep.as_matrix();

    // Candidate starts, best score wins: caller-provided, weighted center
    // of mass, minimum-norm-point handle.
    let mut f: Option<DVector<f64>> = None;
    let mut best_score = f64::NEG_INFINITY;
    let consider = |candidate: DVector<f64>, best: &mut f64, slot: &mut Option<DVector<f64>>| {
        let norm = candidate.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return;
        }
        let unit = candidate / norm;
        let score = weighted_score(rep, q, &unit);
        if score > *best {
            *best = score;
            *slot = Some(unit);
        }
    };
    if let Some(h) = init {
        consider(h.as_vector().clone(), &mut best_score, &mut f);
    }
    let center = vectors * DVector::from_fn(n, |x, _| q.get(x));
    consider(center, &mut best_score, &mut f);
    if f.is_none() {
        let (p, value) = mnp::min_quadratic_over_simplex(&rep.gram());
        if value > 1e-14 {
            consider(vectors * p, &mut best_score, &mut f);
        }
    }
    let mut f = f.ok_or_else(|| {
        Error::Optimizer(
            "no starting handle with positive inner products on the weight support".into(),
        )
    })?;

    // Unnormalized update direction. At the optimum t(f) = f exactly,
    // because <f, t(f)> always equals the total weight 1.
    let target_raw = |f: &DVector<f64>| -> Option<DVector<f64>> {
        let inners = vectors.transpose() * f;
        let mut t = DVector::zeros(vectors.nrows());
        for x in 0..n {
            let w = q.get(x);
            if w == 0.0 {
                continue;
            }
            if inners[x] <= 0.0 {
                return None;
            }
            t += vectors.column(x) * (w / inners[x]);
        }
        t.iter().all(|v| v.is_finite()).then_some(t)
    };
    // Newton step for t(f) - f = 0. The Jacobian of f - t(f) is
    // I + sum_x q_x u_x u_x^T / <u_x, f>^2, symmetric positive definite,
    // so the step always exists. Near the root this converges
    // quadratically, while the plain fixed-point map can contract
    // arbitrarily slowly when the vectors are nearly parallel.
    let dim = vectors.nrows();
    let newton_trial = |f: &DVector<f64>, t_raw: &DVector<f64>| -> Option<DVector<f64>> {
        let inners = vectors.transpose() * f;
        let mut m = DMatrix::identity(dim, dim);
        for x in 0..n {
            let w = q.get(x);
            if w == 0.0 {
                continue;
            }
            let u = vectors.column(x);
            m += u * u.transpose() * (w / (inners[x] * inners[x]));
        }
        let step = m.cholesky()?.solve(&(t_raw - f));
        let trial = f + step;
        let norm = trial.norm();
        (norm > 0.0 && norm.is_finite()).then(|| trial / norm)
    };

    let mut score = weighted_score(rep, q, &f);
    for _ in 0..200 {
        let Some(t_raw) = target_raw(&f) else { break };
        let t_norm = t_raw.norm();
        if !(t_norm > 0.0) || !t_norm.is_finite() {
            break;
        }
        if (&f - &t_raw / t_norm).norm() <= 0.25 * tol::HANDLE_STATIONARY {
            break;
        }
        let mut accepted = false;
        if let Some(trial) = newton_trial(&f, &t_raw) {
            // weighted_score is -inf when any supported inner product goes
            // nonpositive, so acceptance also guards positivity.
            let trial_score = weighted_score(rep, q, &trial);
            if trial_score > score - 1e-15 {
                let moved = (&trial - &f).norm();
                f = trial;
                score = trial_score;
                accepted = true;
                if moved <= 1e-15 {
                    break;
                }
            }
        }
        if !accepted {
            // Damped fixed-point ascent as the globally safe fallback far
            // from the root, where the Newton step may overshoot.
            let t_unit = &t_raw / t_norm;
            let mut damping = 1.0;
            for _ in 0..40 {
                let trial = &f + (&t_unit - &f) * damping;
                let norm = trial.norm();
                if norm > 0.0 {
                    let trial = trial / norm;
                    let trial_score = weighted_score(rep, q, &trial);
                    if trial_score > score - 1e-15 {
                        let moved = (&trial - &f).norm();
                        f = trial;
                        score = trial_score;
                        accepted = true;
                        if moved <= 1e-13 {
                            return finish_weighted_handle(rep, q, f);
                        }
                        break;
                    }
                }
                damping *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }
    finish_weighted_handle(rep, q, f)
}

fn finish_weighted_handle(
    rep: &Representation,
    q: &Composition,
    f: DVector<f64>,
) -> Result<Handle> {
    // Enforce the advertised stationarity: the handle must be a fixed point
    // of its own update within tolerance.
    let vectors = rep.as_matrix();
    let inners = vectors.transpose() * &f;
    let mut t = DVector::zeros(vectors.nrows());
    for x in 0..rep.num_vectors() {
        let w = q.get(x);
        if w == 0.0 {
            continue;
        }
        if inners[x] <= 0.0 {
            return Err(Error::Optimizer(format!(
                "weighted handle lost positivity on supported vector {x}"
            )));
        }
        t += vectors.column(x) * (w / inners[x]);
    }
    let norm = t.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::Optimizer("weighted handle update degenerated".into()));
    }
    let residual = (&f - t / norm).norm();
    if residual > tol::HANDLE_STATIONARY {
        return Err(Error::Optimizer(format!(
            "weighted handle fixed-point residual {residual:.3e} exceeds {:.0e}",
            tol::HANDLE_STATIONARY
        )));
    }
    Handle::new(f)
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// A self-contained witness for an upper bound on a theta value.
///
/// Soundness rests only on `feasibility_residual` and on re-evaluating the
/// objective at the stored handle; [`ThetaCertificate::audit`] does both.
#[derive(Debug, Clone)]
pub struct ThetaCertificate {
    pub representation: Representation,
    pub handle: Handle,
    /// Objective value at the stored handle, in nats.
    pub value: f64,
    /// Worst cap violation of the stored representation.
    pub feasibility_residual: f64,
    pub objective: ObjectiveKind,
    /// Number of optimization starts that were actually run.
    pub restarts_used: usize,
    /// Whether the winning start met the stall criterion before its
    /// iteration budget ran out.
    pub converged: bool,
    pub seed: u64,
}

/// Outcome of re-deriving a certificate's claims from its raw vectors.
#[derive(Debug, Clone, Copy)]
pub struct CertificateAudit {
    pub value_recomputed: f64,
    pub residual_recomputed: f64,
}

impl ThetaCertificate {
    /// Recomputes value and residual from the stored vectors and checks
    /// they match the stored claims within [`tol::CERT_AUDIT`].
    pub fn audit(&self, gram: &GramMatrix) -> Result<CertificateAudit> {
        let residual = feasibility_residual(&self.representation, gram)?;
        let value = evaluate_objective(&self.representation, &self.handle, &self.objective)?;
        if (value - self.value).abs() > tol::CERT_AUDIT {
            return Err(Error::Internal(format!(
                "certificate value {} does not reproduce: recomputed {value}",
                self.value
            )));
        }
        if (residual - self.feasibility_residual).abs() > tol::CERT_AUDIT {
            return Err(Error::Internal(format!(
                "certificate residual {} does not reproduce: recomputed {residual}",
                self.feasibility_residual
            )));
        }
        Ok(CertificateAudit {
            value_recomputed: value,
            residual_recomputed: residual,
        })
    }

    pub fn rho(&self) -> f64 {
        self.representation.rho()
    }

    pub fn to_doc(&self) -> CertificateDoc {
        let rep = &self.representation;
        CertificateDoc {
            rho: rep.rho(),
            value: self.value,
            residual: self.feasibility_residual,
            objective: match &self.objective {
                ObjectiveKind::Minimax => ObjectiveDoc {
                    kind: "minimax".into(),
                    q: None,
                },
                ObjectiveKind::Weighted(q) => ObjectiveDoc {
                    kind: "weighted".into(),
                    q: Some(q.as_slice().to_vec()),
                },
            },
            vectors: (0..rep.num_vectors())
                .map(|x| rep.vector(x).iter().copied().collect())
                .collect(),
            handle: self.handle.as_vector().iter().copied().collect(),
            seed: self.seed,
            restarts_used: self.restarts_used,
            converged: self.converged,
        }
    }

    pub fn from_doc(doc: CertificateDoc) -> Result<Self> {
        let n = doc.vectors.len();
        if n == 0 || doc.vectors.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput(
                "certificate vectors must form a square matrix".into(),
            ));
        }
        let vectors = DMatrix::from_fn(n, n, |i, x| doc.vectors[x][i]);
        let representation = Representation::from_columns(vectors, doc.rho)?;
        if doc.handle.len() != n {
            return Err(Error::InvalidInput(format!(
                "handle has length {}, expected {n}",
                doc.handle.len()
            )));
        }
        let handle = Handle::new(DVector::from_vec(doc.handle))?;
        let objective = match doc.objective.kind.as_str() {
            "minimax" => ObjectiveKind::Minimax,
            "weighted" => {
                let q = doc.objective.q.ok_or_else(|| {
                    Error::InvalidInput("weighted certificate is missing its weights".into())
                })?;
                ObjectiveKind::Weighted(Composition::new(q)?)
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown objective kind {other:?}"
                )))
            }
        };
        Ok(Self {
            representation,
            handle,
            value: doc.value,
            feasibility_residual: doc.residual,
            objective,
            restarts_used: doc.restarts_used,
            converged: doc.converged,
            seed: doc.seed,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("certificate serialization")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(text)?)
    }
}

/// JSON schema for certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub rho: f64,
    pub value: f64,
    pub residual: f64,
    pub objective: ObjectiveDoc,
    /// One row per input letter.
    pub vectors: Vec<Vec<f64>>,
    pub handle: Vec<f64>,
    pub seed: u64,
    pub restarts_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

/// Warm-start payload for the optimizer: a feasible representation from a
/// related problem, optionally with its handle.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub representation: Representation,
    pub handle: Option<Handle>,
}

/// Tuning knobs for the numerical optimizer. The defaults favor certificate
/// quality; [`OptimizeOptions::fast`] trades restarts and iterations for
/// speed inside searches that call the optimizer many times.
#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub seed: u64,
    /// Number of random starts run in addition to the structured starts.
    pub restarts: usize,
    /// Iteration budget per start.
    pub max_iterations: usize,
    /// Ceiling on the feasibility residual of an accepted certificate.
    pub feasibility_tolerance: f64,
    /// A start counts as converged when the objective improves by less than
    /// this over `stall_window` iterations while feasible.
    pub stall_improvement: f64,
    pub stall_window: usize,
    pub warm_start: Option<WarmStart>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            restarts: 16,
            max_iterations: 20_000,
            feasibility_tolerance: tol::FEAS_DEFAULT,
            stall_improvement: tol::OBJ_STALL,
            stall_window: 50,
            warm_start: None,
        }
    }
}

impl OptimizeOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Reduced-budget preset for inner loops that evaluate many candidate
    /// problems; certificates stay sound, only best-effort optimality drops.
    pub fn fast(seed: u64) -> Self {
        Self {
            seed,
            restarts: 2,
            max_iterations: 2_000,
            ..Self::default()
        }
    }

    pub fn warm_started_from(mut self, certificate: &ThetaCertificate) -> Self {
        self.warm_start = Some(WarmStart {
            representation: certificate.representation.clone(),
            handle: Some(certificate.handle.clone()),
        });
        self
    }
}

// ---------------------------------------------------------------------------
// Per-input mixture value
// ---------------------------------------------------------------------------

/// One weighted subproblem of a per-input mixture bound.
#[derive(Debug, Clone)]
pub struct PerInputCertificate {
    pub input: usize,
    /// `P(x)` of this input.
    pub weight: f64,
    pub certificate: ThetaCertificate,
}

/// Value and audit trail of `sum_x P(x) theta(rho, V(.|x))`.
#[derive(Debug, Clone)]
pub struct ThetaPv {
    pub value: f64,
    pub per_input: Vec<PerInputCertificate>,
}

/// Averages the weighted theta value over the rows of a conditional type:
/// each input `x` with `P(x) > 0` contributes `P(x)` times the optimum for
/// weights `V(.|x)`.
///
/// Identical rows are solved once and share a certificate, so a type whose
/// rows all equal `P` reproduces `optimize_theta_weighted(B, rho, P)`
/// exactly.
pub fn theta_pv(
    gram: &GramMatrix,
    rho: f64,
    p: &Composition,
    v: &ConditionalType,
    options: &OptimizeOptions,
) -> Result<ThetaPv> {
    let n = gram.dim();
    if p.len() != n || v.dim() != n {
        return Err(Error::InvalidInput(format!(
            "composition ({}) and conditional type ({}) must match the alphabet size {n}",
            p.len(),
            v.dim()
        )));
    }
    let support = p.support();
    // Distinct rows in first-appearance order; bitwise equality, so
    // deduplication never changes any value.
    let mut distinct: Vec<&Composition> = Vec::new();
    let mut row_of: Vec<usize> = Vec::with_capacity(support.len());
    for &x in &support {
        let row = v.row(x);
        let slot = distinct.iter().position(|r| r.as_slice() == row.as_slice());
        row_of.push(match slot {
            Some(i) => i,
            None => {
                distinct.push(row);
                distinct.len() - 1
            }
        });
    }
    let solved: Vec<Result<ThetaCertificate>> = par::map_slice(&distinct, |row| {
        optimize_theta_weighted(gram, rho, row, options)
    });
    let mut certificates = Vec::with_capacity(distinct.len());
    for result in solved {
        certificates.push(result?);
    }
    let mut value = 0.0;
    let mut per_input = Vec::with_capacity(support.len());
    for (i, &x) in support.iter().enumerate() {
        let certificate = certificates[row_of[i]].clone();
        value += p.get(x) * certificate.value;
        per_input.push(PerInputCertificate {
            input: x,
            weight: p.get(x),
            certificate,
        });
    }
    Ok(ThetaPv { value, per_input })
}
