//! Sign and permutation bookkeeping.
//!
//! Local estimates agree with `A*` only up to a signed permutation. Signs are
//! fixed against a benchmark client; permutations are left to the clustering
//! step. This module also holds the signed-permutation-invariant error metric
//! and the label matching used for misclustering rates.

use serde::{Deserialize, Serialize};

use crate::assignment;
use crate::clustering::{kmeans, pool_atoms};
use crate::local_solver::LocalEstimate;
use crate::{Error, Matrix, Result};

/// `P` with `P[perm[i], i] = signs[i]`, so `(A P)_i = signs[i] * A_{perm[i]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn identity(r: usize) -> Self {
        Self {
            perm: (0..r).collect(),
            signs: vec![1; r],
        }
    }

    pub fn new(perm: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        let r = perm.len();
        if signs.len() != r {
            return Err(Error::DimensionMismatch {
                expected: format!("{r} signs"),
                actual: format!("{} signs", signs.len()),
            });
        }
        let mut seen = vec![false; r];
        for &p in &perm {
            if p >= r || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParameter(format!(
                    "{perm:?} is not a permutation"
                )));
            }
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidParameter(format!(
                "signs must be +-1, got {signs:?}"
            )));
        }
        Ok(Self { perm, signs })
    }

    pub fn r(&self) -> usize {
        self.perm.len()
    }

    pub fn to_matrix(&self) -> Matrix {
        let r = self.r();
        let mut p = Matrix::zeros(r, r);
        for (i, (&row, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            p[(row, i)] = f64::from(s);
        }
        p
    }

    /// `A P`, computed by column selection.
    pub fn apply(&self, a: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.nrows(), self.r());
        for (i, (&j, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            out.set_column(i, &(a.column(j) * f64::from(s)));
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let r = self.r();
        let mut perm = vec![0; r];
        let mut signs = vec![1; r];
        for (i, (&j, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            perm[j] = i;
            signs[j] = s;
        }
        Self { perm, signs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkChoice {
    #[default]
    LargestN,
    BestKmeansLoss,
}

/// Benchmark selection rule. The k-means variant needs the restart budget
/// and seed of the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkStrategy {
    LargestN,
    BestKmeansLoss { restarts: usize, seed: u64 },
}

/// Relative tolerance under which two k-means objectives count as tied.
pub const KMEANS_TIE_RTOL: f64 = 1e-9;

/// Picks the benchmark client id. Ties go to the smallest client id; for the
/// k-means rule, objective ties are broken by the largest-n rule first.
pub fn choose_benchmark(estimates: &[LocalEstimate], strategy: BenchmarkStrategy) -> Result<usize> {
    let mut candidates: Vec<&LocalEstimate> = estimates.iter().filter(|e| !e.is_failed()).collect();
    if candidates.is_empty() {
        return Err(Error::NoBenchmark);
    }
    candidates.sort_by_key(|e| e.client_id);
    match strategy {
        BenchmarkStrategy::LargestN => {
            let mut best = candidates[0];
            for e in &candidates[1..] {
                if e.n_k > best.n_k {
                    best = e;
                }
            }
            Ok(best.client_id)
        }
        BenchmarkStrategy::BestKmeansLoss { restarts, seed } => {
            let r = candidates[0].r();
            let mut scored = Vec::with_capacity(candidates.len());
            for cand in &candidates {
                let (aligned, _) = align_signs(estimates, cand.client_id)?;
                let pool = pool_atoms(&aligned)?;
                scored.push((kmeans(&pool, r, restarts, seed)?.objective, *cand));
            }
            // The objective barely depends on the benchmark: alignment mostly
            // flips whole groups of atoms, which k-means does not see. Ties
            // within rounding fall back to the largest-n rule.
            let best = scored.iter().map(|(o, _)| *o).fold(f64::INFINITY, f64::min);
            let tol = KMEANS_TIE_RTOL * best.abs().max(1.0);
            let mut tied = scored.iter().filter(|(o, _)| *o <= best + tol).map(|(_, e)| *e);
            let first = tied.next().expect("at least one candidate");
            Ok(tied.fold(first, |b, e| if e.n_k > b.n_k { e } else { b }).client_id)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub benchmark_id: usize,
    /// Per estimate (input order): chosen sign of every column. Empty for
    /// failed estimates.
    pub signs: Vec<Vec<i8>>,
    /// Per estimate: the benchmark column `j_i` each column was matched to.
    pub matched: Vec<Vec<usize>>,
    /// `(client_id, column)` pairs with zero norm, left unchanged.
    pub zero_norm_columns: Vec<(usize, usize)>,
}

/// Flips every column whose inner product with its best-matching benchmark
/// column (largest normalized absolute inner product) is negative.
pub fn align_signs(
    estimates: &[LocalEstimate],
    benchmark_id: usize,
) -> Result<(Vec<LocalEstimate>, AlignmentReport)> {
    let bench = estimates
        .iter()
        .find(|e| e.client_id == benchmark_id && !e.is_failed())
        .ok_or(Error::NoBenchmark)?;
    let r = bench.r();
    let bench_cols: Vec<_> = bench.a_tilde.column_iter().map(|c| c.into_owned()).collect();
    let bench_norms: Vec<f64> = bench_cols.iter().map(|c| c.norm()).collect();

    let mut report = AlignmentReport {
        benchmark_id,
        signs: Vec::with_capacity(estimates.len()),
        matched: Vec::with_capacity(estimates.len()),
        zero_norm_columns: Vec::new(),
    };
    let mut aligned = Vec::with_capacity(estimates.len());
    for est in estimates {
        if est.is_failed() {
            report.signs.push(Vec::new());
            report.matched.push(Vec::new());
            aligned.push(est.clone());
            continue;
        }
        if est.r() != r || est.a_tilde.ncols() != r {
            return Err(Error::DimensionMismatch {
                expected: format!("{r}x{r}"),
                actual: format!("{}x{}", est.a_tilde.nrows(), est.a_tilde.ncols()),
            });
        }
        if est.client_id == benchmark_id {
            report.signs.push(vec![1; r]);
            report.matched.push((0..r).collect());
            aligned.push(est.clone());
            continue;
        }
        let mut out = est.clone();
        let mut signs = vec![1i8; r];
        let mut matched = vec![0usize; r];
        for i in 0..r {
            let col = est.a_tilde.column(i);
            let norm = col.norm();
            if norm == 0.0 {
                report.zero_norm_columns.push((est.client_id, i));
                log::warn!("client {} column {i} has zero norm", est.client_id);
                continue;
            }
            let mut best_j = 0;
            let mut best_score = f64::NEG_INFINITY;
            let mut best_inner = 0.0;
            for (j, b) in bench_cols.iter().enumerate() {
                let inner = col.dot(b);
                let denom = norm * bench_norms[j];
                let score = if denom > 0.0 { inner.abs() / denom } else { 0.0 };
                if score > best_score {
                    best_score = score;
                    best_j = j;
                    best_inner = inner;
                }
            }
            matched[i] = best_j;
            if best_inner < 0.0 {
                signs[i] = -1;
                out.a_tilde.column_mut(i).neg_mut();
            }
        }
        report.signs.push(signs);
        report.matched.push(matched);
        aligned.push(out);
    }
    Ok((aligned, report))
}

/// `min_P ||A_hat - A_star P||_F` over signed permutations, solved exactly.
///
/// The problem separates into a per-pair sign choice and an assignment over
/// `c_ij = min(||A_hat_i - A*_j||^2, ||A_hat_i + A*_j||^2)`.
pub fn signed_perm_distance(a_hat: &Matrix, a_star: &Matrix) -> Result<(f64, SignedPermutation)> {
    if a_hat.shape() != a_star.shape() || !a_hat.is_square() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} square", a_star.nrows(), a_star.ncols()),
            actual: format!("{}x{}", a_hat.nrows(), a_hat.ncols()),
        });
    }
    let r = a_hat.ncols();
    let mut cost = vec![vec![0.0; r]; r];
    let mut sign = vec![vec![1i8; r]; r];
    for i in 0..r {
        let h = a_hat.column(i);
        for j in 0..r {
            let s = a_star.column(j);
            let minus = (h - s).norm_squared();
            let plus = (h + s).norm_squared();
            if plus < minus {
                cost[i][j] = plus;
                sign[i][j] = -1;
            } else {
                cost[i][j] = minus;
            }
        }
    }
    let sol = assignment::solve(&cost)?;
    let signs = sol
        .row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| sign[i][j])
        .collect();
    let p = SignedPermutation {
        perm: sol.row_to_col,
        signs,
    };
    Ok((sol.cost.max(0.0).sqrt(), p))
}

fn check_labels(labels: &[usize], r: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= r) {
        Some(&label) => Err(Error::LabelOutOfRange { label, r }),
        None => Ok(()),
    }
}

/// `r x r` confusion counts `[estimated][true]`.
pub fn confusion_matrix(est_labels: &[usize], true_labels: &[usize], r: usize) -> Result<Vec<Vec<usize>>> {
    if est_labels.len() != true_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", true_labels.len()),
            actual: format!("{} labels", est_labels.len()),
        });
    }
    check_labels(est_labels, r)?;
    check_labels(true_labels, r)?;
    let mut counts = vec![vec![0usize; r]; r];
    for (&b, &a) in est_labels.iter().zip(true_labels) {
        counts[b][a] += 1;
    }
    Ok(counts)
}

/// Label matching `pi` (estimated label -> true label) minimizing the number
/// of points with `true != pi(est)`. Returns `(pi, mismatches)`; ties resolve
/// to the lexicographically smallest `pi`.
pub fn best_label_permutation(
    est_labels: &[usize],
    true_labels: &[usize],
    r: usize,
) -> Result<(Vec<usize>, usize)> {
    let counts = confusion_matrix(est_labels, true_labels, r)?;
    let cost: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| -(c as f64)).collect())
        .collect();
    // Integer-valued costs: exact comparison is safe.
    let sol = assignment::solve_lexicographic(&cost, 0.0)?;
    let matched: usize = sol
        .row_to_col
        .iter()
        .enumerate()
        .map(|(b, &a)| counts[b][a])
        .sum();
    Ok((sol.row_to_col, est_labels.len() - matched))
}

/// Within-cluster misclustering rates
/// `s_a = #{points with true label a and pi*(est) != a} / K`.
pub fn misclustering_rates(
    est_labels: &[usize],
    true_labels: &[usize],
    k: usize,
    r: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    let (pi, _) = best_label_permutation(est_labels, true_labels, r)?;
    let mut missed = vec![0usize; r];
    for (&b, &a) in est_labels.iter().zip(true_labels) {
        if pi[b] != a {
            missed[a] += 1;
        }
    }
    Ok(missed.into_iter().map(|m| m as f64 / k as f64).collect())
}
