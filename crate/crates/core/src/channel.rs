//! Discrete memoryless channels and the geometry derived from them.
//!
//! A channel is a row-stochastic matrix `W(y|x)`. Each input letter gets a
//! state vector `psi_x(y) = sqrt(W(y|x))`; the Gram matrix of these vectors
//! collects the Bhattacharyya coefficients `sum_y sqrt(W(y|x) W(y|x'))`,
//! which drive everything else in this crate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theta::Representation;
use crate::tol;

// ---------------------------------------------------------------------------
// Channel
// ---------------------------------------------------------------------------

/// A discrete memoryless channel with at least two inputs and one output.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// Transition probabilities, one row per input letter.
    w: DMatrix<f64>,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
}

/// On-disk form of a channel: `{"W": [[...], ...]}` plus optional labels.
#[derive(Serialize, Deserialize)]
struct ChannelDoc {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_labels: Option<Vec<String>>,
}

impl Channel {
    /// Builds a channel from transition rows, validating stochasticity.
    ///
    /// Requirements: at least two rows, at least one column, all rows the
    /// same length, entries finite and nonnegative, every row summing to one
    /// within [`tol::ROW_SUM`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(rows, None, None)
    }

    pub fn with_labels(
        rows: Vec<Vec<f64>>,
        input_labels: Option<Vec<String>>,
        output_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a channel needs at least 2 input letters, got {}",
                rows.len()
            )));
        }
        let ny = rows[0].len();
        if ny == 0 {
            return Err(Error::InvalidChannel {
                row: 0,
                reason: "no output letters".into(),
            });
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != ny {
                return Err(Error::InvalidChannel {
                    row: x,
                    reason: format!("length {} differs from row 0 length {ny}", row.len()),
                });
            }
            for (y, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidChannel {
                        row: x,
                        reason: format!("entry {y} is {p}, not a finite nonnegative probability"),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol::ROW_SUM {
                return Err(Error::InvalidChannel {
                    row: x,
                    reason: format!("row sums to {sum}, off by more than {:.0e}", tol::ROW_SUM),
                });
            }
        }
        let nx = rows.len();
        let w = DMatrix::from_fn(nx, ny, |x, y| rows[x][y]);
        let input_labels =
            validate_labels(input_labels, nx, "input").unwrap_or_else(|| default_labels(nx));
        let output_labels =
            validate_labels(output_labels, ny, "output").unwrap_or_else(|| default_labels(ny));
        Ok(Self {
            w,
            input_labels,
            output_labels,
        })
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn binary_symmetric(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "crossover probability must lie in [0,1], got {p}"
            )));
        }
        Self::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// The five-input typewriter channel: input `x` lands on output `x` or
    /// `x+1 (mod 5)` with probability one half each. Its confusability
    /// graph is the pentagon, so it has zero-error pairs.
    pub fn pentagon() -> Self {
        let mut rows = vec![vec![0.0; 5]; 5];
        for x in 0..5 {
            rows[x][x] = 0.5;
            rows[x][(x + 1) % 5] = 0.5;
        }
        Self::new(rows).expect("pentagon rows are stochastic")
    }

    /// Noiseless channel with `k` inputs mapped to `k` distinct outputs.
    pub fn identity(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "identity channel needs at least 2 letters, got {k}"
            )));
        }
        let mut rows = vec![vec![0.0; k]; k];
        for (x, row) in rows.iter_mut().enumerate() {
            row[x] = 1.0;
        }
        Self::new(rows)
    }

    /// Parses a built-in channel name: `bsc:<p>`, `pentagon`, or
    /// `identity:<k>`.
    pub fn from_named(name: &str) -> Result<Self> {
        if name == "pentagon" {
            return Ok(Self::pentagon());
        }
        if let Some(arg) = name.strip_prefix("bsc:") {
            let p: f64 = arg
                .parse()
                .map_err(|_| Error::InvalidInput(format!("cannot parse bsc parameter {arg:?}")))?;
            return Self::binary_symmetric(p);
        }
        if let Some(arg) = name.strip_prefix("identity:") {
            let k: usize = arg.parse().map_err(|_| {
                Error::InvalidInput(format!("cannot parse identity size {arg:?}"))
            })?;
            return Self::identity(k);
        }
        Err(Error::InvalidInput(format!(
            "unknown channel {name:?}; expected bsc:<p>, pentagon, or identity:<k>"
        )))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ChannelDoc = serde_json::from_str(text)?;
        Self::with_labels(doc.w, doc.input_labels, doc.output_labels)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let doc = ChannelDoc {
            w: (0..self.num_inputs())
                .map(|x| self.w.row(x).iter().copied().collect())
                .collect(),
            input_labels: Some(self.input_labels.clone()),
            output_labels: Some(self.output_labels.clone()),
        };
        serde_json::to_string_pretty(&doc).expect("channel serialization cannot fail")
    }

    pub fn num_inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn num_outputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.w[(x, y)]
    }

    pub fn input_labels(&self) -> &[String] {
        &self.input_labels
    }

    pub fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    /// Square roots of the transition rows, one unit vector per input.
    pub fn state_vectors(&self) -> StateVectorSet {
        let psi = DMatrix::from_fn(self.num_outputs(), self.num_inputs(), |y, x| {
            self.w[(x, y)].sqrt()
        });
        StateVectorSet { psi }
    }

    /// Shorthand for `state_vectors().gram()`.
    pub fn gram(&self) -> GramMatrix {
        self.state_vectors().gram()
    }
}

fn validate_labels(labels: Option<Vec<String>>, n: usize, _kind: &str) -> Option<Vec<String>> {
    labels.filter(|l| l.len() == n)
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

// ---------------------------------------------------------------------------
// State vectors and Gram matrix
// ---------------------------------------------------------------------------

/// Unit vectors `psi_x(y) = sqrt(W(y|x))`, stored as matrix columns.
#[derive(Debug, Clone)]
pub struct StateVectorSet {
    psi: DMatrix<f64>,
}

impl StateVectorSet {
    pub fn num_inputs(&self) -> usize {
        self.psi.ncols()
    }

    pub fn vector(&self, x: usize) -> DVector<f64> {
        self.psi.column(x).into_owned()
    }

    /// Gram matrix of the state vectors: symmetric, unit diagonal, entries
    /// in `[0, 1]`, positive semidefinite. Entries below [`tol::GRAM_SNAP`]
    /// are snapped to exact zero so zero-error pairs stay exact.
    pub fn gram(&self) -> GramMatrix {
        let n = self.num_inputs();
        let mut b = DMatrix::zeros(n, n);
        for x in 0..n {
            b[(x, x)] = 1.0;
            for y in (x + 1)..n {
                let mut v = self.psi.column(x).dot(&self.psi.column(y));
                if v < tol::GRAM_SNAP {
                    v = 0.0;
                } else if v > 1.0 {
                    v = 1.0;
                }
                b[(x, y)] = v;
                b[(y, x)] = v;
            }
        }
        GramMatrix { b }
    }
}

/// Gram matrix of Bhattacharyya coefficients between input letters.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    b: DMatrix<f64>,
}

impl GramMatrix {
    /// Wraps a raw symmetric matrix after validating the Gram invariants:
    /// unit diagonal, entries in `[0, 1]`, symmetry, and positive
    /// semidefiniteness within [`tol::PSD_EIG`].
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != b.ncols() || b.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "gram matrix must be square and nonempty, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        for x in 0..b.nrows() {
            if (b[(x, x)] - 1.0).abs() > tol::ROW_SUM {
                return Err(Error::InvalidInput(format!(
                    "gram diagonal entry {x} is {}, expected 1",
                    b[(x, x)]
                )));
            }
            for y in 0..b.ncols() {
                let v = b[(x, y)];
                if !v.is_finite() || !(0.0..=1.0 + tol::ROW_SUM).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "gram entry ({x},{y}) is {v}, outside [0,1]"
                    )));
                }
                if (v - b[(y, x)]).abs() > tol::ROW_SUM {
                    return Err(Error::InvalidInput(format!(
                        "gram entry ({x},{y}) is not symmetric"
                    )));
                }
            }
        }
        let min_eig = smallest_eigenvalue(&b);
        if min_eig < -tol::PSD_EIG {
            return Err(Error::InvalidInput(format!(
                "gram matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { b })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.b[(x, y)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Pairwise Bhattacharyya distances `-ln B[x][y]`; `+inf` for
    /// zero-error pairs, `0` on the diagonal.
    pub fn bhattacharyya_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                0.0
            } else if self.b[(x, y)] == 0.0 {
                f64::INFINITY
            } else {
                -self.b[(x, y)].ln()
            }
        })
    }

    /// Input pairs `(x, y)` with `x < y` that can never be confused.
    pub fn zero_error_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for x in 0..self.dim() {
            for y in (x + 1)..self.dim() {
                if self.b[(x, y)] == 0.0 {
                    pairs.push((x, y));
                }
            }
        }
        pairs
    }

    /// Entrywise power `B^(1/rho)`, the pairwise caps a degree-`rho`
    /// representation must respect. `0^(1/rho)` stays exactly `0`.
    pub fn caps(&self, rho: f64) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                1.0
            } else {
                let b = self.b[(x, y)];
                if b == 0.0 {
                    0.0
                } else {
                    b.powf(1.0 / rho)
                }
            }
        })
    }

    /// Whether the entrywise power `B^(1/rho)` is itself positive
    /// semidefinite (within [`tol::PSD_EIG`]). When it is, an exact
    /// representation exists and the caps are met with equality.
    pub fn is_nonneg_definite_at(&self, rho: f64) -> Result<bool> {
        validate_rho(rho)?;
        Ok(smallest_eigenvalue(&self.caps(rho)) >= -tol::PSD_EIG)
    }

    /// Factorizes `B^(1/rho)` into unit vectors whose Gram reproduces it
    /// within [`tol::FACTOR_RESIDUAL`].
    ///
    /// Fails with [`Error::NotNonnegDefinite`] when the entrywise power has
    /// a negative eigenvalue; the numerical optimizer handles that regime.
    pub fn exact_representation(&self, rho: f64) -> Result<Representation> {
        validate_rho(rho)?;
        let caps = self.caps(rho);
        let min_eig = smallest_eigenvalue(&caps);
        if min_eig < -tol::PSD_EIG {
            return Err(Error::NotNonnegDefinite {
                rho,
                eigenvalue: min_eig,
            });
        }
        let vectors = factor_psd(&caps);
        let rep = Representation::from_columns(vectors, rho)?;
        let residual = max_abs_gram_deviation(rep.gram(), &caps);
        if residual > tol::FACTOR_RESIDUAL {
            return Err(Error::Internal(format!(
                "exact factorization residual {residual:.3e} exceeds {:.0e}",
                tol::FACTOR_RESIDUAL
            )));
        }
        Ok(rep)
    }
}

fn validate_rho(rho: f64) -> Result<()> {
    if !rho.is_finite() || rho < 1.0 {
        return Err(Error::InvalidInput(format!(
            "degree rho must be a finite value >= 1, got {rho}"
        )));
    }
    Ok(())
}

pub(crate) fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Factorizes a PSD matrix `H` as `V^T V` and returns unit columns. Tiny
/// negative eigenvalues from rounding are clamped to zero; columns are
/// renormalized so the representation invariant (unit vectors) is exact.
pub(crate) fn factor_psd(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    // Column x of `vectors` is row x of the eigenvector matrix scaled by
    // Lambda^(1/2), so vectors^T vectors reconstructs the input.
    let mut vectors = DMatrix::zeros(n, n);
    for x in 0..n {
        for j in 0..n {
            vectors[(j, x)] = eig.eigenvectors[(x, j)] * eig.eigenvalues[j].max(0.0).sqrt();
        }
    }
    for x in 0..n {
        let norm = vectors.column(x).norm();
        if norm > 0.0 {
            for j in 0..n {
                vectors[(j, x)] /= norm;
            }
        } else {
            vectors[(x, x)] = 1.0;
        }
    }
    vectors
}

fn max_abs_gram_deviation(gram: DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (gram - target).abs().max()
}

// ---------------------------------------------------------------------------
// Compositions and conditional types
// ---------------------------------------------------------------------------

/// A probability vector over input letters.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    p: Vec<f64>,
}

impl Composition {
    /// Validates nonnegativity and normalization within [`tol::ROW_SUM`].
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidComposition("empty vector".into()));
        }
        for (x, &v) in p.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidComposition(format!(
                    "entry {x} is {v}, not a finite nonnegative probability"
                )));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > tol::ROW_SUM {
            return Err(Error::InvalidComposition(format!(
                "sums to {sum}, off by more than {:.0e}",
                tol::ROW_SUM
            )));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut p = vec![0.0; n];
        p[x] = 1.0;
        Self { p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn get(&self, x: usize) -> f64 {
        self.p[x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Indices carrying positive probability.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&x| self.p[x] > 0.0).collect()
    }

    pub fn is_point_mass(&self) -> bool {
        self.support().len() == 1
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .p
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.ln())
            .sum::<f64>()
    }
}

/// A row-stochastic matrix `V(x'|x)` on the input alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalType {
    rows: Vec<Composition>,
}

impl ConditionalType {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidConditional {
                row: 0,
                reason: "no rows".into(),
            });
        }
        let n = rows.len();
        let mut out = Vec::with_capacity(n);
        for (x, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidConditional {
                    row: x,
                    reason: format!("length {} differs from side {n}", row.len()),
                });
            }
            out.push(Composition::new(row).map_err(|e| Error::InvalidConditional {
                row: x,
                reason: e.to_string(),
            })?);
        }
        Ok(Self { rows: out })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|x| Composition::point_mass(n, x)).collect(),
        }
    }

    /// The memoryless type whose every row equals `p`; it is stationary for
    /// `p` by construction.
    pub fn from_rows_equal(p: &Composition) -> Self {
        Self {
            rows: vec![p.clone(); p.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, x: usize, x2: usize) -> f64 {
        self.rows[x].get(x2)
    }

    pub fn row(&self, x: usize) -> &Composition {
        &self.rows[x]
    }

    /// Row-major flattening, used by the CSV output format.
    pub fn flatten(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|r| r.as_slice().iter().copied())
            .collect()
    }
}

/// Largest deviation between `P V` and `P`.
pub fn stationarity_residual(p: &Composition, v: &ConditionalType) -> f64 {
    let n = p.len();
    let mut worst: f64 = 0.0;
    for x2 in 0..n {
        let marginal: f64 = (0..n).map(|x| p.get(x) * v.get(x, x2)).sum();
        worst = worst.max((marginal - p.get(x2)).abs());
    }
    worst
}

/// Whether `P V = P` within `tolerance`.
pub fn is_stationary(p: &Composition, v: &ConditionalType, tolerance: f64) -> bool {
    stationarity_residual(p, v) <= tolerance
}

/// Mutual information `I(P, V)` in nats between an input drawn from `P` and
/// a successor drawn from `V(.|x)`.
///
/// Zero joint probabilities contribute zero. The output marginal can only
/// vanish where every joint term vanishes; anything else indicates
/// corrupted inputs and returns an internal error.
pub fn mutual_information(p: &Composition, v: &ConditionalType) -> Result<f64> {
    if p.len() != v.dim() {
        return Err(Error::InvalidInput(format!(
            "composition has {} letters but conditional type has {}",
            p.len(),
            v.dim()
        )));
    }
    let n = p.len();
    let mut marginal = vec![0.0; n];
    for x in 0..n {
        for x2 in 0..n {
            marginal[x2] += p.get(x) * v.get(x, x2);
        }
    }
    let mut info = 0.0;
    for x in 0..n {
        if p.get(x) == 0.0 {
            continue;
        }
        for x2 in 0..n {
            let joint = p.get(x) * v.get(x, x2);
            if joint == 0.0 {
                continue;
            }
            if marginal[x2] <= 0.0 {
                return Err(Error::Internal(format!(
                    "output marginal {x2} is zero but joint probability is {joint}"
                )));
            }
            info += joint * (v.get(x, x2) / marginal[x2]).ln();
        }
    }
    // Tiny negative values are rounding noise around independent inputs.
    Ok(info.max(0.0))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
