//! Brute-force oracles shared by the integration tests and the acceptance run.
//! None of these call into the solvers they check.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rfica::alignment::SignedPermutation;
use rfica::local_solver::LocalEstimate;
use rfica::seed;
use rfica::Matrix;

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// `min ||A_hat - A* P||_F` over all `2^r r!` signed permutation matrices,
/// built explicitly and multiplied out.
pub fn brute_signed_perm_distance(a_hat: &Matrix, a_star: &Matrix) -> f64 {
    let r = a_hat.ncols();
    let mut best = f64::INFINITY;
    for perm in permutations(r) {
        for mask in 0..(1u32 << r) {
            let mut p = Matrix::zeros(r, r);
            for (i, &j) in perm.iter().enumerate() {
                p[(i, j)] = if mask >> i & 1 == 1 { -1.0 } else { 1.0 };
            }
            best = best.min((a_hat - a_star * &p).norm());
        }
    }
    best
}

/// Mismatch count of `pi` (estimated label -> true label).
pub fn mismatches(est: &[usize], truth: &[usize], pi: &[usize]) -> usize {
    est.iter().zip(truth).filter(|(&e, &t)| pi[e] != t).count()
}

/// Lexicographically first permutation with the fewest mismatches.
pub fn brute_label_permutation(est: &[usize], truth: &[usize], r: usize) -> (Vec<usize>, usize) {
    let mut best: Option<(Vec<usize>, usize)> = None;
    for pi in permutations(r) {
        let m = mismatches(est, truth, &pi);
        if best.as_ref().is_none_or(|(_, b)| m < *b) {
            best = Some((pi, m));
        }
    }
    best.expect("r >= 1")
}

/// `s_a` by a direct double loop for a given `pi`.
pub fn direct_rates(est: &[usize], truth: &[usize], pi: &[usize], k: usize, r: usize) -> Vec<f64> {
    (0..r)
        .map(|a| {
            let mut count = 0usize;
            for i in 0..est.len() {
                if truth[i] == a && pi[est[i]] != a {
                    count += 1;
                }
            }
            count as f64 / k as f64
        })
        .collect()
}

/// Smallest grid point minimizing the pinball objective, with a relative
/// tie tolerance.
pub fn grid_quantile(values: &[f64], p: f64, grid: &[f64]) -> f64 {
    let obj = |q: f64| -> f64 {
        values
            .iter()
            .map(|&x| if x >= q { p * (x - q) } else { (1.0 - p) * (q - x) })
            .sum()
    };
    let min = grid.iter().map(|&q| obj(q)).fold(f64::INFINITY, f64::min);
    *grid
        .iter()
        .find(|&&q| obj(q) <= min + 1e-9 * (1.0 + min.abs()))
        .expect("non-empty grid")
}

/// Sum of squared distances to cluster means for a labeling.
pub fn sse(points: &[Vec<f64>], labels: &[usize], r: usize) -> f64 {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; r];
    let mut counts = vec![0usize; r];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            p.iter()
                .zip(&sums[l])
                .map(|(x, s)| {
                    let m = s / counts[l] as f64;
                    (x - m) * (x - m)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Global k-means optimum over all labelings with every cluster non-empty.
/// The first point is pinned to cluster 0, which loses no optimum.
pub fn enumerate_kmeans(points: &[Vec<f64>], r: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let total = (r as u64).pow(n as u32 - 1);
    let mut best = (f64::INFINITY, Vec::new());
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut().skip(1) {
            *l = (c % r as u64) as usize;
            c /= r as u64;
        }
        let mut seen = vec![false; r];
        labels.iter().for_each(|&l| seen[l] = true);
        if seen.iter().any(|s| !s) {
            continue;
        }
        let v = sse(points, &labels, r);
        if v < best.0 {
            best = (v, labels.clone());
        }
    }
    best
}

/// Per-client column errors by trying every permutation and every sign.
pub fn brute_epsilons(estimates: &[LocalEstimate], a_star: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let r = a_star.ncols();
    let k = estimates.len() as f64;
    let mut per_column = Vec::new();
    let mut eps_a = vec![0.0; r];
    for est in estimates {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for perm in permutations(r) {
            let mut total = 0.0;
            for i in 0..r {
                let c = est.a_tilde.column(i);
                let s = a_star.column(perm[i]);
                total += (c - s).norm_squared().min((c + s).norm_squared());
            }
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, perm));
            }
        }
        let perm = best.unwrap().1;
        let errs: Vec<f64> = (0..r)
            .map(|i| {
                let c = est.a_tilde.column(i);
                let s = a_star.column(perm[i]);
                (c - s).norm().min((c + s).norm())
            })
            .collect();
        for i in 0..r {
            eps_a[perm[i]] += errs[i] * errs[i] / k;
        }
        per_column.push(errs);
    }
    (per_column, eps_a)
}

pub fn random_signed_perm(r: usize, rng: &mut seed::Rng) -> SignedPermutation {
    let mut perm: Vec<usize> = (0..r).collect();
    perm.shuffle(rng);
    let signs = (0..r).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    SignedPermutation::new(perm, signs).unwrap()
}

pub fn gaussian_matrix(r: usize, c: usize, rng: &mut seed::Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Noiseless estimates `A* P_k` for random signed permutations.
pub fn noiseless_estimates(a_star: &Matrix, k: usize, rng: &mut seed::Rng) -> Vec<LocalEstimate> {
    (0..k)
        .map(|id| {
            let p = random_signed_perm(a_star.ncols(), rng);
            LocalEstimate::from_matrix(id, p.apply(a_star), 1000)
        })
        .collect()
}
