use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geomedian::{geometric_median_with, GMResult, GM_DEFAULT_MAX_ITERS, GM_DEFAULT_TOL};
use crate::alignment::{align_signs, choose_benchmark, AlignmentReport, BenchmarkStrategy};
use crate::clustering::{kmeans, pool_atoms, AtomPool, ClusterModel};
use crate::local_solver::LocalEstimate;
use crate::par::*;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    RfIca,
    FicaCenters,
    SimpleMean,
    SimpleMedian,
}

impl MethodTag {
    pub const ALL: [MethodTag; 4] = [
        MethodTag::RfIca,
        MethodTag::FicaCenters,
        MethodTag::SimpleMean,
        MethodTag::SimpleMedian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::RfIca => "rf_ica",
            MethodTag::FicaCenters => "fica_centers",
            MethodTag::SimpleMean => "simple_mean",
            MethodTag::SimpleMedian => "simple_median",
        }
    }

    pub fn uses_clustering(self) -> bool {
        matches!(self, MethodTag::RfIca | MethodTag::FicaCenters)
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimpleMode {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateConfig {
    pub benchmark: BenchmarkStrategy,
    pub kmeans_restarts: usize,
    pub seed: u64,
    pub gm_tol: f64,
    pub gm_max_iters: usize,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkStrategy::LargestN,
            kmeans_restarts: 10,
            seed: 0,
            gm_tol: GM_DEFAULT_TOL,
            gm_max_iters: GM_DEFAULT_MAX_ITERS,
        }
    }
}

/// Step 1 of the pipeline, shared by RF-ICA and the centroid baseline.
#[derive(Debug, Clone)]
pub struct ClusterStep {
    pub benchmark_id: usize,
    pub aligned: Vec<LocalEstimate>,
    pub alignment: AlignmentReport,
    pub pool: AtomPool,
    pub model: ClusterModel,
}

#[derive(Debug, Clone)]
pub struct AggregationResult {
    /// Aggregated estimate; column `a` comes from cluster `a`.
    pub a_bar: Matrix,
    pub method: MethodTag,
    pub benchmark_id: usize,
    /// Clustering methods only.
    pub cluster_step: Option<ClusterStep>,
    /// One entry per column for geometric-median methods, empty otherwise.
    pub gm: Vec<GMResult>,
}

/// Benchmark choice, sign alignment, pooling and k-means.
pub fn cluster_step(estimates: &[LocalEstimate], cfg: &AggregateConfig) -> Result<ClusterStep> {
    let benchmark_id = choose_benchmark(estimates, cfg.benchmark)?;
    let (aligned, alignment) = align_signs(estimates, benchmark_id)?;
    let pool = pool_atoms(&aligned)?;
    let r = pool.dim;
    let model = kmeans(&pool, r, cfg.kmeans_restarts, cfg.seed)?;
    Ok(ClusterStep {
        benchmark_id,
        aligned,
        alignment,
        pool,
        model,
    })
}

fn columns_to_matrix(columns: &[Vec<f64>]) -> Matrix {
    let r = columns.first().map_or(0, Vec::len);
    Matrix::from_fn(r, columns.len(), |i, j| columns[j][i])
}

/// Step 2 for a clustering method on a precomputed [`ClusterStep`].
pub fn aggregate(step: ClusterStep, method: MethodTag, cfg: &AggregateConfig) -> Result<AggregationResult> {
    let r = step.model.centroids.len();
    let (columns, gm) = match method {
        MethodTag::FicaCenters => (step.model.centroids.clone(), Vec::new()),
        MethodTag::RfIca => {
            let gm = (0..r)
                .into_par_iter()
                .map(|a| {
                    let members: Vec<Vec<f64>> = step
                        .model
                        .members(a)
                        .into_iter()
                        .map(|i| step.pool.atoms[i].vector.clone())
                        .collect();
                    if members.is_empty() {
                        return Err(Error::EmptyCluster(a));
                    }
                    geometric_median_with(&members, cfg.gm_tol, cfg.gm_max_iters)
                })
                .collect::<Result<Vec<_>>>()?;
            (gm.iter().map(|g| g.point.clone()).collect(), gm)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "{other} does not use the clustering step"
            )))
        }
    };
    Ok(AggregationResult {
        a_bar: columns_to_matrix(&columns),
        method,
        benchmark_id: step.benchmark_id,
        cluster_step: Some(step),
        gm,
    })
}

/// RF-ICA: k-means on the sign-aligned atoms, then a geometric median per
/// cluster.
pub fn rf_ica(estimates: &[LocalEstimate], cfg: &AggregateConfig) -> Result<AggregationResult> {
    aggregate(cluster_step(estimates, cfg)?, MethodTag::RfIca, cfg)
}

/// Same clustering as [`rf_ica`], returning the k-means centroids.
pub fn fica_centers(estimates: &[LocalEstimate], cfg: &AggregateConfig) -> Result<AggregationResult> {
    aggregate(cluster_step(estimates, cfg)?, MethodTag::FicaCenters, cfg)
}

/// Column-by-column mean or geometric median after sign alignment only.
pub fn simple_aggregate(
    estimates: &[LocalEstimate],
    mode: SimpleMode,
    cfg: &AggregateConfig,
) -> Result<AggregationResult> {
    let benchmark_id = choose_benchmark(estimates, cfg.benchmark)?;
    let (aligned, _) = align_signs(estimates, benchmark_id)?;
    let usable: Vec<&LocalEstimate> = aligned.iter().filter(|e| !e.is_failed()).collect();
    let r = usable[0].r();
    let per_column = |j: usize| -> Vec<Vec<f64>> {
        usable
            .iter()
            .map(|e| e.a_tilde.column(j).iter().copied().collect())
            .collect()
    };
    let (columns, gm, method) = match mode {
        SimpleMode::Mean => {
            let cols = (0..r)
                .map(|j| {
                    let vs = per_column(j);
                    let mut mean = vec![0.0; r];
                    for v in &vs {
                        for (m, x) in mean.iter_mut().zip(v) {
                            *m += x;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= vs.len() as f64);
                    mean
                })
                .collect::<Vec<_>>();
            (cols, Vec::new(), MethodTag::SimpleMean)
        }
        SimpleMode::Median => {
            let gm = (0..r)
                .into_par_iter()
                .map(|j| geometric_median_with(&per_column(j), cfg.gm_tol, cfg.gm_max_iters))
                .collect::<Result<Vec<_>>>()?;
            (gm.iter().map(|g| g.point.clone()).collect(), gm, MethodTag::SimpleMedian)
        }
    };
    Ok(AggregationResult {
        a_bar: columns_to_matrix(&columns),
        method,
        benchmark_id,
        cluster_step: None,
        gm,
    })
}

impl AggregationResult {
    /// Runs any method tag on the same inputs.
    pub fn run(method: MethodTag, estimates: &[LocalEstimate], cfg: &AggregateConfig) -> Result<Self> {
        match method {
            MethodTag::RfIca => rf_ica(estimates, cfg),
            MethodTag::FicaCenters => fica_centers(estimates, cfg),
            MethodTag::SimpleMean => simple_aggregate(estimates, SimpleMode::Mean, cfg),
            MethodTag::SimpleMedian => simple_aggregate(estimates, SimpleMode::Median, cfg),
        }
    }
}
