//! k-means over the pooled estimator columns ("atoms").

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::local_solver::LocalEstimate;
use crate::par::*;
use crate::seed::{self, STREAM_KMEANS};
use crate::{Error, Result};

/// Lloyd iterations per restart.
pub const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub client_id: usize,
    pub column: usize,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomPool {
    pub atoms: Vec<Atom>,
    pub dim: usize,
    pub warnings: Vec<String>,
}

impl AtomPool {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).ok_or_else(|| Error::Empty("atom pool".into()))?;
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: format!("atoms of length {dim}"),
                actual: "ragged atoms".into(),
            });
        }
        let atoms = vectors
            .into_iter()
            .enumerate()
            .map(|(i, vector)| Atom {
                client_id: i,
                column: 0,
                vector,
            })
            .collect();
        Ok(Self {
            atoms,
            dim,
            warnings: Vec::new(),
        })
    }
}

/// Flattens every column of every non-failed estimate, in input order.
pub fn pool_atoms(estimates: &[LocalEstimate]) -> Result<AtomPool> {
    let mut atoms = Vec::new();
    let mut warnings = Vec::new();
    let mut dim = None;
    for est in estimates {
        if est.is_failed() {
            let w = format!("client {} excluded from the atom pool: failed estimate", est.client_id);
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        let r = est.a_tilde.nrows();
        if *dim.get_or_insert(r) != r {
            return Err(Error::DimensionMismatch {
                expected: format!("columns of length {}", dim.unwrap_or(r)),
                actual: format!("client {} has length {r}", est.client_id),
            });
        }
        for (column, col) in est.a_tilde.column_iter().enumerate() {
            atoms.push(Atom {
                client_id: est.client_id,
                column,
                vector: col.iter().copied().collect(),
            });
        }
    }
    match dim {
        Some(dim) => Ok(AtomPool { atoms, dim, warnings }),
        None => Err(Error::Empty("no usable estimates to pool".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    /// Label of every atom, in pool order.
    pub labels: Vec<usize>,
    pub objective: f64,
    pub restarts_run: usize,
    /// Final objective of every restart, in restart order.
    pub restart_objectives: Vec<f64>,
    /// Index of the selected restart.
    pub best_restart: usize,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// `sum_i ||atom_i - centroid_{label_i}||^2`.
pub fn objective(pool: &AtomPool, centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    pool.atoms
        .iter()
        .zip(labels)
        .map(|(a, &l)| sq_dist(&a.vector, &centroids[l]))
        .sum()
}

fn kmeans_plus_plus(pool: &AtomPool, r: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let n = pool.len();
    let mut centroids = Vec::with_capacity(r);
    centroids.push(pool.atoms[rng.random_range(0..n)].vector.clone());
    let mut d2: Vec<f64> = pool
        .atoms
        .iter()
        .map(|a| sq_dist(&a.vector, &centroids[0]))
        .collect();
    while centroids.len() < r {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = pool.atoms[pick].vector.clone();
        for (d, a) in d2.iter_mut().zip(&pool.atoms) {
            *d = d.min(sq_dist(&a.vector, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(pool: &AtomPool, centroids: &[Vec<f64>]) -> Vec<usize> {
    pool.atoms.iter().map(|a| nearest(&a.vector, centroids).0).collect()
}

/// Cluster means; empty clusters keep `None`.
fn means(pool: &AtomPool, labels: &[usize], r: usize) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; pool.dim]; r];
    let mut counts = vec![0usize; r];
    for (a, &l) in pool.atoms.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(&a.vector) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|x| x / c as f64).collect()))
        .collect()
}

/// Mean update; an empty cluster is re-seeded at the atom farthest from its
/// own centroid.
fn update_centroids(pool: &AtomPool, labels: &[usize], r: usize) -> Vec<Vec<f64>> {
    let raw = means(pool, labels, r);
    if raw.iter().all(Option::is_some) {
        return raw.into_iter().flatten().collect();
    }
    let filled: Vec<Vec<f64>> = raw
        .iter()
        .map(|m| m.clone().unwrap_or_else(|| vec![0.0; pool.dim]))
        .collect();
    let mut residual: Vec<(f64, usize)> = pool
        .atoms
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (a, &l))| (sq_dist(&a.vector, &filled[l]), i))
        .collect();
    // Farthest first; equal distances keep the lower index first.
    residual.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut donors = residual.into_iter().map(|(_, i)| i);
    raw.into_iter()
        .map(|m| match m {
            Some(c) => c,
            None => {
                let i = donors.next().expect("pool has at least r atoms");
                pool.atoms[i].vector.clone()
            }
        })
        .collect()
}

struct RestartOutcome {
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
    objective: f64,
}

fn lloyd(pool: &AtomPool, r: usize, seed: u64) -> RestartOutcome {
    let mut rng = seed::rng(seed);
    let mut centroids = kmeans_plus_plus(pool, r, &mut rng);
    let mut labels = assign(pool, &centroids);
    let mut last = objective(pool, &centroids, &labels);
    for _ in 0..MAX_LLOYD_ITERS {
        centroids = update_centroids(pool, &labels, r);
        let next = assign(pool, &centroids);
        let obj = objective(pool, &centroids, &next);
        assert!(
            obj <= last + 1e-9 * last.max(1.0),
            "Lloyd objective increased from {last} to {obj}"
        );
        last = obj;
        if next == labels {
            break;
        }
        labels = next;
    }
    // Final centroids are exact cluster means of the final labels.
    let centroids: Vec<Vec<f64>> = means(pool, &labels, r)
        .into_iter()
        .zip(centroids)
        .map(|(m, old)| m.unwrap_or(old))
        .collect();
    let objective = objective(pool, &centroids, &labels);
    RestartOutcome {
        centroids,
        labels,
        objective,
    }
}

/// Best-of-`restarts` Lloyd's algorithm with k-means++ seeding.
///
/// Restarts run in parallel; the winner is the smallest objective, ties to
/// the lower restart index, so the result depends only on `seed`.
pub fn kmeans(pool: &AtomPool, r: usize, restarts: usize, seed: u64) -> Result<ClusterModel> {
    if r == 0 {
        return Err(Error::InvalidParameter("need at least one cluster".into()));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    if pool.len() < r {
        return Err(Error::TooFewAtoms {
            count: pool.len(),
            r,
        });
    }
    let base = seed::mix(seed, STREAM_KMEANS);
    let outcomes: Vec<RestartOutcome> = (0..restarts)
        .into_par_iter()
        .map(|i| lloyd(pool, r, seed::mix(base, i as u64)))
        .collect();
    let restart_objectives: Vec<f64> = outcomes.iter().map(|o| o.objective).collect();
    let best_restart = restart_objectives
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("restarts >= 1");
    let best = outcomes.into_iter().nth(best_restart).expect("index in range");
    Ok(ClusterModel {
        centroids: best.centroids,
        labels: best.labels,
        objective: best.objective,
        restarts_run: restarts,
        restart_objectives,
        best_restart,
    })
}

/// `model.objective / reference_objective`; `0/0` is 1 and `x/0` is infinite.
pub fn approximation_ratio(model: &ClusterModel, reference_objective: f64) -> Result<f64> {
    if reference_objective < 0.0 || reference_objective.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "reference objective must be non-negative, got {reference_objective}"
        )));
    }
    if reference_objective == 0.0 {
        return Ok(if model.objective == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok(model.objective / reference_objective)
}
