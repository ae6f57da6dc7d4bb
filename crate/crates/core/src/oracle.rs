//! Brute-force and randomized checks that the rest of the crate is audited
//! against: exhaustive small-code enumeration against the finite Plotkin
//! form, randomized spherical cap-packing instances, and the eigenvalue
//! row-sum inequality. Everything here is elementary on purpose; none of it
//! shares code with the optimizer it polices.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bound::finite_plotkin_rhs;
use crate::channel::GramMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::tol::EXHAUSTIVE_SLACK;

/// Hard ceiling on the number of codes an exhaustive run may visit.
pub const ENUMERATION_GUARD: f64 = 1e7;

// ---------------------------------------------------------------------------
// Codes
// ---------------------------------------------------------------------------

/// A block code: at least two distinct words of equal length over the
/// channel input alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    alphabet: usize,
    words: Vec<Vec<usize>>,
}

impl Code {
    pub fn new(alphabet: usize, words: Vec<Vec<usize>>) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::InvalidInput(format!(
                "alphabet size must be at least 2, got {alphabet}"
            )));
        }
        if words.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a code needs at least 2 words, got {}",
                words.len()
            )));
        }
        let n = words[0].len();
        if n == 0 {
            return Err(Error::InvalidInput("block length must be positive".into()));
        }
        for (i, word) in words.iter().enumerate() {
            if word.len() != n {
                return Err(Error::InvalidInput(format!(
                    "word {i} has length {} but word 0 has length {n}",
                    word.len()
                )));
            }
            if let Some(&bad) = word.iter().find(|&&letter| letter >= alphabet) {
                return Err(Error::InvalidInput(format!(
                    "word {i} uses letter {bad} outside the alphabet 0..{alphabet}"
                )));
            }
        }
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                if words[i] == words[j] {
                    return Err(Error::InvalidInput(format!(
                        "words {i} and {j} are identical; duplicates have distance 0"
                    )));
                }
            }
        }
        Ok(Self { alphabet, words })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn block_length(&self) -> usize {
        self.words[0].len()
    }

    pub fn words(&self) -> &[Vec<usize>] {
        &self.words
    }
}

/// Largest pairwise product-form inner product of the code:
/// `max over pairs of prod_i B[w[i]][w'[i]]`. The minimum Bhattacharyya
/// distance of the code is `-ln` of this, by additivity over positions.
pub fn code_max_inner(code: &Code, gram: &GramMatrix) -> Result<f64> {
    if code.alphabet() != gram.dim() {
        return Err(Error::InvalidInput(format!(
            "code alphabet {} does not match the channel alphabet {}",
            code.alphabet(),
            gram.dim()
        )));
    }
    let mut worst: f64 = 0.0;
    for i in 0..code.size() {
        for j in (i + 1)..code.size() {
            worst = worst.max(word_pair_inner(&code.words[i], &code.words[j], gram));
        }
    }
    Ok(worst)
}

fn word_pair_inner(a: &[usize], b: &[usize], gram: &GramMatrix) -> f64 {
    let mut product = 1.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        product *= gram.entry(x, y);
        if product == 0.0 {
            return 0.0;
        }
    }
    product
}

// ---------------------------------------------------------------------------
// Enumeration scaffolding
// ---------------------------------------------------------------------------

/// `C(k, m)` with an early bail-out above the guard.
fn combination_count(k: usize, m: usize) -> f64 {
    if m > k {
        return 0.0;
    }
    let mut count = 1.0f64;
    for i in 0..m {
        count *= (k - i) as f64 / (i + 1) as f64;
        if count > 1e15 {
            return count;
        }
    }
    count
}

/// All words of length `n` over `0..alphabet`, in lexicographic order,
/// optionally restricted to a fixed letter-count profile.
fn enumerate_words(alphabet: usize, n: usize, counts: Option<&[usize]>) -> Vec<Vec<usize>> {
    let total = (alphabet as f64).powi(n as i32);
    let mut words = Vec::new();
    if total > 1e9 {
        return words; // callers guard on code counts before this matters
    }
    let mut word = vec![0usize; n];
    loop {
        let keep = match counts {
            None => true,
            Some(profile) => {
                let mut seen = vec![0usize; alphabet];
                for &letter in &word {
                    seen[letter] += 1;
                }
                seen == profile
            }
        };
        if keep {
            words.push(word.clone());
        }
        // Odometer increment.
        let mut pos = n;
        loop {
            if pos == 0 {
                return words;
            }
            pos -= 1;
            word[pos] += 1;
            if word[pos] < alphabet {
                break;
            }
            word[pos] = 0;
        }
    }
}

/// Visits every `m`-subset of `0..k` whose smallest element is `first`,
/// in lexicographic order.
fn for_each_subset_with_first<F: FnMut(&[usize])>(k: usize, m: usize, first: usize, f: &mut F) {
    let mut chosen = vec![first];
    descend_subsets(k, m, &mut chosen, f);
}

fn descend_subsets<F: FnMut(&[usize])>(k: usize, m: usize, chosen: &mut Vec<usize>, f: &mut F) {
    if chosen.len() == m {
        f(chosen);
        return;
    }
    let remaining = m - chosen.len();
    let next = chosen.last().copied().unwrap_or(0) + 1;
    if next + remaining > k {
        return;
    }
    for i in next..=(k - remaining) {
        chosen.push(i);
        descend_subsets(k, m, chosen, f);
        chosen.pop();
    }
}

/// Pairwise inner products of an indexed word list, precomputed when the
/// list is small enough to make the table worthwhile.
struct WordTable<'a> {
    words: &'a [Vec<usize>],
    gram: &'a GramMatrix,
    table: Option<DMatrix<f64>>,
}

impl<'a> WordTable<'a> {
    fn new(words: &'a [Vec<usize>], gram: &'a GramMatrix) -> Self {
        let k = words.len();
        let table = (k <= 2048).then(|| {
            DMatrix::from_fn(k, k, |i, j| word_pair_inner(&words[i], &words[j], gram))
        });
        Self { words, gram, table }
    }

    fn inner(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t[(i, j)],
            None => word_pair_inner(&self.words[i], &self.words[j], self.gram),
        }
    }

    fn subset_max_inner(&self, subset: &[usize]) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..subset.len() {
            for b in (a + 1)..subset.len() {
                worst = worst.max(self.inner(subset[a], subset[b]));
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Exhaustive distance-bound check
// ---------------------------------------------------------------------------

/// Outcome of an exhaustive enumeration against the finite Plotkin form.
#[derive(Debug, Clone, Serialize)]
pub struct ExhaustiveReport {
    pub codes_checked: u64,
    pub violations: u64,
    /// The forced lower bound on the max pairwise inner product.
    pub rhs: f64,
    /// Smallest observed `max_inner - rhs` across all codes; negative
    /// beyond the tolerance means a violation.
    pub tightest_margin: f64,
    /// The code attaining the tightest margin.
    pub tightest_code: Vec<Vec<usize>>,
}

/// Enumerates every length-`n` code with `m` words over the channel and
/// checks `code_max_inner >= finite_plotkin_rhs - 1e-12` for each.
///
/// `theta_value` must be an exact or certified upper bound on the minimax
/// theta at this degree; overestimates only weaken the right side, so a
/// certificate is a sound input. Refuses runs beyond
/// [`ENUMERATION_GUARD`] codes.
pub fn check_plotkin_exhaustive(
    gram: &GramMatrix,
    n: usize,
    m: usize,
    rho: f64,
    theta_value: f64,
) -> Result<ExhaustiveReport> {
    let rhs = finite_plotkin_rhs(m, n, theta_value, rho)?;
    let words = enumerate_words(gram.dim(), n, None);
    let count = combination_count(words.len(), m);
    if count > ENUMERATION_GUARD {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_GUARD,
        });
    }
    if words.len() < m {
        return Err(Error::InvalidInput(format!(
            "only {} distinct words exist; cannot form codes of size {m}",
            words.len()
        )));
    }

    let table = WordTable::new(&words, gram);
    let k = words.len();
    // Shard by the smallest word index; shards merge in index order so the
    // tightest-code tie-break is deterministic.
    let shards: Vec<(u64, u64, f64, Vec<usize>)> = par::map_indexed(k - m + 1, |first| {
        let mut checked = 0u64;
        let mut violations = 0u64;
        let mut tightest = f64::INFINITY;
        let mut tightest_subset = Vec::new();
        for_each_subset_with_first(k, m, first, &mut |subset| {
            let margin = table.subset_max_inner(subset) - rhs;
            checked += 1;
            if margin < -EXHAUSTIVE_SLACK {
                violations += 1;
            }
            if margin < tightest {
                tightest = margin;
                tightest_subset = subset.to_vec();
            }
        });
        (checked, violations, tightest, tightest_subset)
    });

    let mut report = ExhaustiveReport {
        codes_checked: 0,
        violations: 0,
        rhs,
        tightest_margin: f64::INFINITY,
        tightest_code: Vec::new(),
    };
    for (checked, violations, tightest, subset) in shards {
        report.codes_checked += checked;
        report.violations += violations;
        if tightest < report.tightest_margin {
            report.tightest_margin = tightest;
            report.tightest_code = subset.iter().map(|&i| words[i].clone()).collect();
        }
    }
    Ok(report)
}

/// The best code found by enumeration.
#[derive(Debug, Clone)]
pub struct BestCode {
    pub code: Code,
    /// Its largest pairwise inner product.
    pub max_inner: f64,
    /// Its minimum Bhattacharyya distance, `-ln max_inner`.
    pub min_distance: f64,
}

/// Finds the code maximizing the minimum pairwise Bhattacharyya distance
/// (equivalently, minimizing [`code_max_inner`]) among all length-`n`
/// codes with `m` words, optionally restricted to words with the given
/// letter counts. Ties break toward the lexicographically first codeword
/// list. Returns `None` when no code matches the restriction.
pub fn best_min_distance(
    gram: &GramMatrix,
    n: usize,
    m: usize,
    letter_counts: Option<&[usize]>,
) -> Result<Option<BestCode>> {
    if let Some(counts) = letter_counts {
        if counts.len() != gram.dim() {
            return Err(Error::InvalidInput(format!(
                "letter counts have length {} but the alphabet has {} letters",
                counts.len(),
                gram.dim()
            )));
        }
        if counts.iter().sum::<usize>() != n {
            return Err(Error::InvalidInput(format!(
                "letter counts sum to {} but the block length is {n}",
                counts.iter().sum::<usize>()
            )));
        }
    }
    let words = enumerate_words(gram.dim(), n, letter_counts);
    if words.len() < m {
        return Ok(None);
    }
    let count = combination_count(words.len(), m);
    if count > ENUMERATION_GUARD {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_GUARD,
        });
    }

    let table = WordTable::new(&words, gram);
    let k = words.len();
    let shards: Vec<(f64, Vec<usize>)> = par::map_indexed(k - m + 1, |first| {
        let mut best = f64::INFINITY;
        let mut best_subset = Vec::new();
        for_each_subset_with_first(k, m, first, &mut |subset| {
            let inner = table.subset_max_inner(subset);
            if inner < best {
                best = inner;
                best_subset = subset.to_vec();
            }
        });
        (best, best_subset)
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    for (inner, subset) in shards {
        if subset.is_empty() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((current, _)) => inner < *current,
        };
        if better {
            best = Some((inner, subset));
        }
    }
    let Some((max_inner, subset)) = best else {
        return Ok(None);
    };
    let code = Code::new(gram.dim(), subset.iter().map(|&i| words[i].clone()).collect())?;
    let min_distance = if max_inner > 0.0 {
        -max_inner.ln()
    } else {
        f64::INFINITY
    };
    Ok(Some(BestCode {
        code,
        max_inner,
        min_distance,
    }))
}

// ---------------------------------------------------------------------------
// Randomized checks
// ---------------------------------------------------------------------------

/// Outcome of a randomized property run.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trials: u64,
    pub violations: u64,
    /// Smallest observed inequality margin; negative beyond the tolerance
    /// means a violation.
    pub worst_margin: f64,
}

const TRIAL_SLACK: f64 = 1e-9;

fn random_unit_vector(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| -> f64 { StandardNormal.sample(rng) });
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// Cap-packing inequality: unit vectors `v_1..v_M` with `<v_i, f>^2 >= c`
/// for a unit `f` must contain a pair with `|<v_i, v_j>| >= (Mc-1)/(M-1)`.
///
/// Instances are built to satisfy the premise by construction: each `v_i`
/// is sampled inside a cap around `f` whose width is drawn log-uniformly,
/// covering both tight and slack regimes; `c` is then the measured minimum.
pub fn check_cap_packing(m: usize, dim: usize, trials: u64, seed: u64) -> Result<TrialReport> {
    if m < 2 || dim < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 vectors in dimension 2, got M = {m}, dim = {dim}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = TrialReport {
        trials,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    for _ in 0..trials {
        let f = random_unit_vector(&mut rng, dim);
        // Cap width: 1 - cos(angle) is log-uniform in [1e-6, 1].
        let exponent: f64 = rng.random_range(-6.0..0.0);
        let width = 10f64.powf(exponent);
        let mut vectors = Vec::with_capacity(m);
        for _ in 0..m {
            let cos_angle = 1.0 - width * rng.random::<f64>();
            let sin_angle = (1.0 - cos_angle * cos_angle).max(0.0).sqrt();
            // Random direction orthogonal to f.
            let raw = random_unit_vector(&mut rng, dim);
            let mut tangent = &raw - &f * raw.dot(&f);
            let norm = tangent.norm();
            if norm <= 1e-9 {
                vectors.push(f.clone());
                continue;
            }
            tangent /= norm;
            let v = &f * cos_angle + &tangent * sin_angle;
            let v_norm = v.norm();
            vectors.push(v / v_norm);
        }
        let c = vectors
            .iter()
            .map(|v| {
                let inner = v.dot(&f);
                inner * inner
            })
            .fold(f64::INFINITY, f64::min);
        let mut closest: f64 = f64::NEG_INFINITY;
        for i in 0..m {
            for j in (i + 1)..m {
                closest = closest.max(vectors[i].dot(&vectors[j]).abs());
            }
        }
        let rhs = (m as f64 * c - 1.0) / (m as f64 - 1.0);
        let margin = closest - rhs;
        if margin < -TRIAL_SLACK {
            report.violations += 1;
        }
        report.worst_margin = report.worst_margin.min(margin);
    }
    Ok(report)
}

/// Row-sum eigenvalue inequality: for a Gram matrix `A` of unit vectors,
/// the largest eigenvalue never exceeds the largest absolute row sum.
pub fn check_rowsum_eigenvalue(trials: u64, seed: u64) -> Result<TrialReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut report = TrialReport {
        trials,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    for _ in 0..trials {
        let dim = 2 + (rng.random::<u64>() % 6) as usize;
        let m = 2 + (rng.random::<u64>() % 6) as usize;
        let mut phi = DMatrix::zeros(dim, m);
        for col in 0..m {
            let v = random_unit_vector(&mut rng, dim);
            phi.set_column(col, &v);
        }
        let a = phi.transpose() * &phi;
        let eigen = a.clone().symmetric_eigen();
        let lambda_max = eigen.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst_row_sum = (0..m)
            .map(|i| (0..m).map(|j| a[(i, j)].abs()).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = worst_row_sum - lambda_max;
        if margin < -TRIAL_SLACK {
            report.violations += 1;
        }
        report.worst_margin = report.worst_margin.min(margin);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Channel;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn bsc_gram(p: f64) -> GramMatrix {
        Channel::binary_symmetric(p).unwrap().gram()
    }

    #[test]
    fn code_rejects_duplicates_and_bad_letters() {
        assert!(Code::new(2, vec![vec![0, 1], vec![0, 1]]).is_err());
        assert!(Code::new(2, vec![vec![0, 2], vec![0, 1]]).is_err());
        assert!(Code::new(2, vec![vec![0, 1]]).is_err());
        assert!(Code::new(2, vec![vec![0, 1], vec![1, 0, 1]]).is_err());
        assert!(Code::new(2, vec![vec![0, 1], vec![1, 0]]).is_ok());
    }

    #[test]
    fn max_inner_of_repetition_code_is_pairwise_power() {
        let gram = bsc_gram(0.1);
        let code = Code::new(2, vec![vec![0, 0, 0], vec![1, 1, 1]]).unwrap();
        let inner = code_max_inner(&code, &gram).unwrap();
        assert_relative_eq!(inner, 0.6f64.powi(3), epsilon = 1e-12);
    }

    #[test]
    fn max_inner_is_zero_across_orthogonal_symbols() {
        let gram = Channel::identity(2).unwrap().gram();
        let code = Code::new(2, vec![vec![0], vec![1]]).unwrap();
        assert_eq!(code_max_inner(&code, &gram).unwrap(), 0.0);
    }

    #[test]
    fn word_enumeration_is_lexicographic_and_filterable() {
        let words = enumerate_words(2, 2, None);
        assert_eq!(
            words,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        let balanced = enumerate_words(2, 2, Some(&[1, 1]));
        assert_eq!(balanced, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn subset_visitor_matches_binomial_count() {
        let mut seen = 0u64;
        for first in 0..4 {
            for_each_subset_with_first(6, 3, first, &mut |subset| {
                assert_eq!(subset.len(), 3);
                assert!(subset.windows(2).all(|w| w[0] < w[1]));
                seen += 1;
            });
        }
        assert_eq!(seen, 20);
        assert_eq!(combination_count(6, 3), 20.0);
    }

    #[test]
    fn exhaustive_check_passes_on_small_binary_cases() {
        let gram = bsc_gram(0.1);
        // Exact binary theta at rho = 1, uniform weights: -ln((1+0.6)/2).
        let theta = -(0.8f64).ln();
        let report = check_plotkin_exhaustive(&gram, 3, 2, 1.0, theta).unwrap();
        assert_eq!(report.codes_checked, 28);
        assert_eq!(report.violations, 0);
        assert!(report.tightest_margin >= -EXHAUSTIVE_SLACK);
        assert_eq!(report.tightest_code.len(), 2);
    }

    #[test]
    fn exhaustive_check_is_trivial_in_the_vacuous_regime() {
        let gram = bsc_gram(0.1);
        let report = check_plotkin_exhaustive(&gram, 4, 2, 1.0, 5.0).unwrap();
        assert_eq!(report.rhs, 0.0);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn exhaustive_check_refuses_oversized_runs() {
        let gram = bsc_gram(0.1);
        match check_plotkin_exhaustive(&gram, 24, 5, 1.0, 0.22) {
            Err(Error::GuardExceeded { count, limit }) => {
                assert!(count > limit);
            }
            other => panic!("expected the guard to fire, got {other:?}"),
        }
    }

    #[test]
    fn best_code_on_bsc_is_the_repetition_code() {
        let gram = bsc_gram(0.1);
        let best = best_min_distance(&gram, 3, 2, None).unwrap().unwrap();
        assert_eq!(
            best.code.words(),
            &[vec![0, 0, 0], vec![1, 1, 1]]
        );
        assert_relative_eq!(best.max_inner, 0.216, epsilon = 1e-12);
        assert_relative_eq!(best.min_distance, -(0.216f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn best_balanced_code_at_length_four() {
        let gram = bsc_gram(0.1);
        let best = best_min_distance(&gram, 4, 2, Some(&[2, 2])).unwrap().unwrap();
        // Complementary balanced words differ in all four places.
        assert_relative_eq!(best.max_inner, 0.6f64.powi(4), epsilon = 1e-12);
        assert_eq!(
            best.code.words(),
            &[vec![0, 0, 1, 1], vec![1, 1, 0, 0]]
        );
    }

    #[test]
    fn composition_filter_can_rule_out_all_codes() {
        let gram = bsc_gram(0.1);
        // Only one word has all four letters equal to 0.
        let best = best_min_distance(&gram, 4, 2, Some(&[4, 0])).unwrap();
        assert!(best.is_none());
    }

    #[test]
    fn identity_channel_admits_a_zero_error_code() {
        let gram = Channel::identity(2).unwrap().gram();
        let best = best_min_distance(&gram, 1, 2, None).unwrap().unwrap();
        assert_eq!(best.max_inner, 0.0);
        assert_eq!(best.min_distance, f64::INFINITY);
    }

    #[test]
    fn cap_packing_holds_across_random_instances() {
        for (m, dim) in [(2usize, 2usize), (3, 4), (5, 8)] {
            let report = check_cap_packing(m, dim, 2000, 7).unwrap();
            assert_eq!(report.violations, 0, "M = {m}, dim = {dim}");
            assert!(report.worst_margin >= -TRIAL_SLACK);
        }
    }

    #[test]
    fn cap_packing_equality_when_all_vectors_coincide() {
        // All v_i equal to f: c = 1 and the pair bound is also 1.
        let m = 4;
        let rhs = (m as f64 * 1.0 - 1.0) / (m as f64 - 1.0);
        assert_abs_diff_eq!(rhs, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cap_packing_reports_are_reproducible() {
        let a = check_cap_packing(3, 4, 500, 11).unwrap();
        let b = check_cap_packing(3, 4, 500, 11).unwrap();
        assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
    }

    #[test]
    fn rowsum_bound_holds_across_random_instances() {
        let report = check_rowsum_eigenvalue(2000, 7).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin >= -TRIAL_SLACK);
    }

    #[test]
    fn exhaustive_soundness_with_certified_theta_values() {
        // End-to-end: optimizer certificates (upper bounds on theta) feed
        // the finite Plotkin form; no enumerated code may beat it.
        use crate::theta::{optimize_theta, OptimizeOptions};
        let gram = bsc_gram(0.1);
        for rho in [1.0, 2.0] {
            let cert = optimize_theta(&gram, rho, &OptimizeOptions::fast(7)).unwrap();
            for n in [2usize, 3] {
                for m in [2usize, 3] {
                    let report =
                        check_plotkin_exhaustive(&gram, n, m, rho, cert.value).unwrap();
                    assert_eq!(report.violations, 0, "rho = {rho}, n = {n}, M = {m}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pair_inner_factorizes_over_positions(
            seed in 0u64..1000,
            n in 1usize..5,
        ) {
            use rand::RngExt;
            use rand::SeedableRng;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let gram = bsc_gram(0.1);
            let a: Vec<usize> = (0..n).map(|_| (rng.random::<u64>() % 2) as usize).collect();
            let b: Vec<usize> = (0..n).map(|_| (rng.random::<u64>() % 2) as usize).collect();
            let direct = word_pair_inner(&a, &b, &gram);
            let differing = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
            prop_assert!((direct - 0.6f64.powi(differing as i32)).abs() < 1e-12);
        }
    }
}
