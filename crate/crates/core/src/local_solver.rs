//! Per-client ICA: prewhitening followed by symmetric kurtosis FastICA.
//!
//! The fixed-point step maximizes `sum_i ||Q y_i||_4^4` over orthogonal `Q`:
//! `Q <- polar(mean_i (Q y_i)^3 y_i^T)`, with the cube taken entrywise. The
//! polar factor is the symmetric decorrelation of the updated rows.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::model_gen::{generate_mixing, polar_factor, ClientDataset};
use crate::seed::{self, STREAM_SOLVER};
use crate::{Error, Matrix, Result};

/// Smallest covariance eigenvalue accepted by [`prewhiten`].
pub const COVARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitMode {
    /// Seeded random orthogonal start, different for every client.
    #[default]
    RandomOrthogonal,
    /// The same starting matrix for every client.
    Shared(Matrix),
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Convergence threshold on `||Q_{t+1} - Q_t||_F` after sign alignment.
    pub tol: f64,
    pub init_mode: InitMode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            init_mode: InitMode::RandomOrthogonal,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstimateStatus {
    Ok,
    Failed(String),
}

/// One client's local estimate of the mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEstimate {
    pub client_id: usize,
    /// Columns estimate the columns of `A*` up to a signed permutation.
    /// All zeros when the client failed.
    pub a_tilde: Matrix,
    pub n_k: usize,
    pub iters_used: usize,
    pub converged: bool,
    /// Contrast `sum_i ||Q y_i||_4^4 / n` at the first and last iterate.
    pub objective_initial: f64,
    pub objective_final: f64,
    pub status: EstimateStatus,
}

impl LocalEstimate {
    /// Wraps an externally computed estimator, e.g. one read from disk.
    pub fn from_matrix(client_id: usize, a_tilde: Matrix, n_k: usize) -> Self {
        Self {
            client_id,
            a_tilde,
            n_k,
            iters_used: 0,
            converged: true,
            objective_initial: f64::NAN,
            objective_final: f64::NAN,
            status: EstimateStatus::Ok,
        }
    }

    pub fn failed(client_id: usize, r: usize, n_k: usize, reason: impl Into<String>) -> Self {
        Self {
            client_id,
            a_tilde: Matrix::zeros(r, r),
            n_k,
            iters_used: 0,
            converged: false,
            objective_initial: f64::NAN,
            objective_final: f64::NAN,
            status: EstimateStatus::Failed(reason.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, EstimateStatus::Failed(_))
    }

    pub fn r(&self) -> usize {
        self.a_tilde.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub w: Matrix,
    pub applied: bool,
}

/// Second-moment matrix `Y Y^T / n`. The sources are zero-mean, so no centering.
pub fn sample_covariance(y: &Matrix) -> Matrix {
    let n = y.ncols().max(1) as f64;
    (y * y.transpose()) / n
}

/// Whitens `Y` with `W = Cov(Y)^{-1/2}` from a symmetric eigendecomposition.
pub fn prewhiten(y: &Matrix) -> Result<(Matrix, WhiteningTransform)> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Err(Error::InvalidDimension(format!(
            "cannot whiten a {}x{} matrix",
            y.nrows(),
            y.ncols()
        )));
    }
    let cov = sample_covariance(y);
    let eig = SymmetricEigen::new(cov);
    let smallest = eig.eigenvalues.min();
    if !(smallest > COVARIANCE_TOLERANCE) {
        return Err(Error::SingularCovariance {
            eigenvalue: smallest,
            threshold: COVARIANCE_TOLERANCE,
        });
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let w = &eig.eigenvectors * Matrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let y_white = &w * y;
    Ok((y_white, WhiteningTransform { w, applied: true }))
}

/// Mean of `||Q y_i||_4^4` over samples.
pub fn contrast(q: &Matrix, y_white: &Matrix) -> f64 {
    let proj = q * y_white;
    proj.iter().map(|v| v.powi(4)).sum::<f64>() / y_white.ncols().max(1) as f64
}

fn initial_rotation(r: usize, cfg: &SolverConfig, seed: u64) -> Result<Matrix> {
    match &cfg.init_mode {
        InitMode::Identity => Ok(Matrix::identity(r, r)),
        InitMode::Shared(m) => {
            if m.nrows() != r || m.ncols() != r {
                return Err(Error::DimensionMismatch {
                    expected: format!("{r}x{r} shared initialization"),
                    actual: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            polar_factor(m)
        }
        InitMode::RandomOrthogonal if r == 1 => Ok(Matrix::identity(1, 1)),
        InitMode::RandomOrthogonal => Ok(generate_mixing(r, seed)?.into_matrix()),
    }
}

/// Symmetric FastICA on prewhitened data. Never fails on non-convergence:
/// the result carries `converged = false` instead.
pub fn fastica_symmetric(y_white: &Matrix, cfg: &SolverConfig) -> Result<LocalEstimate> {
    cfg.validate()?;
    let (r, n) = y_white.shape();
    if r == 0 || n < r {
        return Err(Error::InvalidDimension(format!(
            "FastICA needs 1 <= r <= n, got r={r}, n={n}"
        )));
    }
    let mut q = initial_rotation(r, cfg, cfg.seed)?;
    let objective_initial = contrast(&q, y_white);
    let y_t = y_white.transpose();
    let inv_n = 1.0 / n as f64;

    let mut converged = false;
    let mut iters_used = 0;
    for _ in 0..cfg.max_iters {
        iters_used += 1;
        let mut proj = &q * y_white;
        proj.apply(|v| *v = *v * *v * *v);
        let grad = proj * &y_t * inv_n;
        let mut next = match polar_factor(&grad) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("FastICA update degenerate after {iters_used} iterations: {e}");
                break;
            }
        };
        // Rows of Q are the estimated columns; the fixed point is only
        // defined up to their signs.
        for i in 0..r {
            if next.row(i).dot(&q.row(i)) < 0.0 {
                next.row_mut(i).neg_mut();
            }
        }
        let step = (&next - &q).norm();
        q = next;
        if step <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(LocalEstimate {
        client_id: 0,
        objective_initial,
        objective_final: contrast(&q, y_white),
        a_tilde: q.transpose(),
        n_k: n,
        iters_used,
        converged,
        status: EstimateStatus::Ok,
    })
}

/// Whitens and solves one client. Degenerate data yields a flagged failed
/// estimate rather than an error, so one bad client cannot abort a run.
pub fn solve_client(ds: &ClientDataset, cfg: &SolverConfig) -> LocalEstimate {
    let r = ds.observations.nrows();
    let n_k = ds.observations.ncols();
    if n_k < r {
        let reason = format!("client {} has {n_k} samples for r = {r}", ds.client_id);
        log::warn!("{reason}");
        return LocalEstimate::failed(ds.client_id, r, n_k, reason);
    }
    let client_cfg = SolverConfig {
        seed: seed::mix_all(cfg.seed, &[STREAM_SOLVER, ds.client_id as u64]),
        ..cfg.clone()
    };
    let outcome = prewhiten(&ds.observations)
        .and_then(|(y_white, _)| fastica_symmetric(&y_white, &client_cfg));
    match outcome {
        Ok(mut est) => {
            est.client_id = ds.client_id;
            est.n_k = n_k;
            est
        }
        Err(e) => {
            let reason = format!("client {}: {e}", ds.client_id);
            log::warn!("{reason}");
            LocalEstimate::failed(ds.client_id, r, n_k, reason)
        }
    }
}
