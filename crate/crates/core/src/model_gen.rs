//! Synthetic federated ICA instances.
//!
//! All clients share one orthogonal mixing matrix. Sources are
//! Bernoulli-Gaussian, and "corrupted" clients differ from normal ones only in
//! how many samples they hold.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::{self, STREAM_MIXING, STREAM_PARTITION, STREAM_SOURCES};
use crate::{Error, Matrix, Result};

/// Smallest singular value accepted by [`nearest_orthogonal`].
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Square mixing matrix, the ground truth `A*` or one of its estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(Matrix);

impl MixingMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "mixing matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self(entries))
    }

    pub fn r(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Minimal squared distance between two distinct columns.
    pub fn separation(&self) -> f64 {
        column_separation(&self.0)
    }

    /// `||A^T A - I||_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

pub fn orthogonality_defect(m: &Matrix) -> f64 {
    let n = m.ncols();
    (m.transpose() * m - Matrix::identity(n, n)).norm()
}

/// `min_{a != b} ||M_a - M_b||^2`; infinite for a single column.
pub fn column_separation(m: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..m.ncols() {
        for b in (a + 1)..m.ncols() {
            best = best.min((m.column(a) - m.column(b)).norm_squared());
        }
    }
    best
}

/// Polar factor `U V^T` of `M = U S V^T`, the orthogonal matrix closest to `M`
/// in Frobenius norm.
pub fn nearest_orthogonal(m: &Matrix) -> Result<MixingMatrix> {
    Ok(MixingMatrix(polar_factor(m)?))
}

pub(crate) fn polar_factor(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "polar factor needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.clone().svd(true, true);
    let smallest = svd.singular_values.min();
    if !(smallest > RANK_TOLERANCE) {
        return Err(Error::RankDeficient {
            singular_value: smallest,
            threshold: RANK_TOLERANCE,
        });
    }
    // Both factors were requested above.
    let u = svd.u.expect("left singular vectors");
    let v_t = svd.v_t.expect("right singular vectors");
    Ok(u * v_t)
}

/// Seeded ground-truth mixing matrix: an `r x r` standard Gaussian matrix
/// projected onto the orthogonal group.
pub fn generate_mixing(r: usize, seed: u64) -> Result<MixingMatrix> {
    if r < 2 {
        return Err(Error::InvalidDimension(format!(
            "mixing dimension must be at least 2, got {r}"
        )));
    }
    let mut rng = seed::rng(seed);
    let gaussian = Matrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    nearest_orthogonal(&gaussian)
}

/// Bernoulli-Gaussian source signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMatrix {
    pub entries: Matrix,
    pub sparsity: f64,
}

/// `r x n` sources with entries `bernoulli(sparsity) * normal(0, 1)`.
pub fn generate_sources(r: usize, n: usize, sparsity: f64, seed: u64) -> Result<SourceMatrix> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sparsity must lie in (0, 1], got {sparsity}"
        )));
    }
    if r == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "sources need r >= 1 and n >= 1, got r={r}, n={n}"
        )));
    }
    let mut rng = seed::rng(seed);
    // Column-major fill keeps the stream order independent of nalgebra internals.
    let mut data = Vec::with_capacity(r * n);
    for _ in 0..r * n {
        let active = rng.random::<f64>() < sparsity;
        let w: f64 = rng.sample(StandardNormal);
        data.push(if active { w } else { 0.0 });
    }
    Ok(SourceMatrix {
        entries: Matrix::from_vec(r, n, data),
        sparsity,
    })
}

/// One client's local data `Y = A* X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub observations: Matrix,
    pub sources: Matrix,
    pub n_k: usize,
    /// Scenario metadata only; the aggregation never sees it.
    pub corrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentScenario {
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_normal: usize,
    pub n_corrupt: usize,
    pub corrupt_fraction: f64,
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for ExperimentScenario {
    fn default() -> Self {
        Self {
            r: 10,
            k: 30,
            n_normal: 5000,
            n_corrupt: 300,
            corrupt_fraction: 0.1,
            sparsity: 0.1,
            seed: 0,
        }
    }
}

impl ExperimentScenario {
    /// `floor(corrupt_fraction * K)`, robust to products like `0.35 * 20`
    /// landing one ulp below an integer.
    pub fn corrupted_count(&self) -> usize {
        let exact = self.corrupt_fraction * self.k as f64;
        (exact + 1e-9).floor().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::InvalidDimension(format!(
                "r must be at least 2, got {}",
                self.r
            )));
        }
        if self.k == 0 || self.n_normal == 0 || self.n_corrupt == 0 {
            return Err(Error::InvalidParameter(
                "K, n_normal and n_corrupt must be positive".into(),
            ));
        }
        if !(self.corrupt_fraction >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "corrupt_fraction must be non-negative, got {}",
                self.corrupt_fraction
            )));
        }
        if self.corrupt_fraction >= 0.5 {
            return Err(Error::BeyondBreakdown(self.corrupt_fraction));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sparsity must lie in (0, 1], got {}",
                self.sparsity
            )));
        }
        Ok(())
    }
}

/// A generated federated instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mixing: MixingMatrix,
    pub clients: Vec<ClientDataset>,
}

impl Scenario {
    pub fn corrupted_ids(&self) -> Vec<usize> {
        self.clients
            .iter()
            .filter(|c| c.corrupted)
            .map(|c| c.client_id)
            .collect()
    }
}

/// Builds the shared mixing matrix and all client datasets.
///
/// The corrupted clients are the first `floor(corrupt_fraction * K)` indices
/// of a seeded shuffle of `0..K`.
pub fn make_scenario(scenario: &ExperimentScenario) -> Result<Scenario> {
    scenario.validate()?;
    let mixing = generate_mixing(scenario.r, seed::mix(scenario.seed, STREAM_MIXING))?;

    let mut order: Vec<usize> = (0..scenario.k).collect();
    order.shuffle(&mut seed::rng(seed::mix(scenario.seed, STREAM_PARTITION)));
    let mut corrupted = vec![false; scenario.k];
    for &k in order.iter().take(scenario.corrupted_count()) {
        corrupted[k] = true;
    }

    let sources_seed = seed::mix(scenario.seed, STREAM_SOURCES);
    let clients = (0..scenario.k)
        .map(|k| {
            let n_k = if corrupted[k] {
                scenario.n_corrupt
            } else {
                scenario.n_normal
            };
            let sources = generate_sources(
                scenario.r,
                n_k,
                scenario.sparsity,
                seed::mix(sources_seed, k as u64),
            )?;
            Ok(ClientDataset {
                client_id: k,
                observations: mixing.matrix() * &sources.entries,
                sources: sources.entries,
                n_k,
                corrupted: corrupted[k],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario { mixing, clients })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Newton iteration for the polar factor, independent of the SVD path.
    fn newton_polar(m: &Matrix) -> Matrix {
        let mut q = m.clone();
        for _ in 0..100 {
            let inv_t = q.clone().try_inverse().unwrap().transpose();
            q = (&q + inv_t) * 0.5;
        }
        q
    }

    #[test]
    fn identity_and_positive_diagonal_map_to_identity() {
        let id = Matrix::identity(3, 3);
        assert!((nearest_orthogonal(&id).unwrap().matrix() - &id).norm() < 1e-14);
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
        let q = nearest_orthogonal(&d).unwrap();
        assert!((q.matrix() - Matrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn random_gaussian_polar_factor_is_optimal() {
        let mut rng = seed::rng(5);
        let m = Matrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = nearest_orthogonal(&m).unwrap().into_matrix();
        assert!(orthogonality_defect(&q) <= 1e-10);
        assert!((&q - newton_polar(&m)).norm() < 1e-10);
        let score = (q.transpose() * &m).trace();
        for i in 0..100 {
            let r = generate_mixing(3, 1000 + i).unwrap().into_matrix();
            assert!((&q * r).dot(&m) <= score + 1e-12);
        }
    }

    #[test]
    fn rank_deficient_input_names_singular_value() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match nearest_orthogonal(&m) {
            Err(Error::RankDeficient { singular_value, .. }) => assert!(singular_value < 1e-12),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn mixing_is_deterministic_and_orthogonal() {
        let a = generate_mixing(4, 7).unwrap();
        let b = generate_mixing(4, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.orthogonality_defect() <= 1e-10);
        assert!(matches!(generate_mixing(1, 7), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn separation_is_two_for_orthonormal_columns() {
        let a = generate_mixing(10, 1).unwrap();
        assert!((a.separation() - 2.0).abs() <= 1e-9);
        let det = generate_mixing(2, 3).unwrap().matrix().determinant();
        assert!((det.abs() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn source_moments_match_bernoulli_gaussian() {
        let s = generate_sources(5, 100_000, 0.1, 2).unwrap();
        let n = s.entries.len() as f64;
        let m2 = s.entries.iter().map(|x| x * x).sum::<f64>() / n;
        let m4 = s.entries.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        assert!((0.095..=0.105).contains(&m2), "second moment {m2}");
        let kurt = m4 / (m2 * m2);
        assert!((27.0..=33.0).contains(&kurt), "kurtosis {kurt}");

        // Zero fraction within 5 binomial standard deviations of 0.9.
        let zeros = s.entries.iter().filter(|x| **x == 0.0).count() as f64 / n;
        let sd = (0.9 * 0.1 / n).sqrt();
        assert!((zeros - 0.9).abs() <= 5.0 * sd);
    }

    #[test]
    fn dense_sources_have_no_zeros() {
        let s = generate_sources(3, 1000, 1.0, 9).unwrap();
        assert!(s.entries.iter().all(|x| *x != 0.0));
        assert!(generate_sources(3, 10, 0.0, 1).is_err());
        assert!(generate_sources(3, 10, 1.5, 1).is_err());
    }

    #[test]
    fn scenario_partition_and_reconstruction() {
        let cfg = ExperimentScenario {
            r: 4,
            k: 30,
            n_normal: 200,
            n_corrupt: 50,
            corrupt_fraction: 0.1,
            sparsity: 0.1,
            seed: 17,
        };
        let s = make_scenario(&cfg).unwrap();
        assert_eq!(s.corrupted_ids().len(), 3);
        for c in &s.clients {
            assert_eq!(c.n_k, if c.corrupted { 50 } else { 200 });
            assert_eq!(c.observations.ncols(), c.n_k);
            let recon = s.mixing.matrix() * &c.sources;
            assert_eq!((&c.observations - recon).norm(), 0.0);
        }
        let again = make_scenario(&cfg).unwrap();
        assert_eq!(s.corrupted_ids(), again.corrupted_ids());
        assert_eq!(s.clients, again.clients);
    }

    #[test]
    fn clean_scenario_and_breakdown_refusal() {
        let cfg = ExperimentScenario {
            r: 3,
            k: 10,
            n_normal: 20,
            corrupt_fraction: 0.0,
            ..Default::default()
        };
        let s = make_scenario(&cfg).unwrap();
        assert!(s.clients.iter().all(|c| c.n_k == 20 && !c.corrupted));

        let bad = ExperimentScenario {
            corrupt_fraction: 0.5,
            ..cfg
        };
        let err = make_scenario(&bad).unwrap_err();
        assert!(err.to_string().contains("breakdown"));
    }

    #[test]
    fn corrupted_count_survives_rounding() {
        let s = ExperimentScenario {
            k: 20,
            corrupt_fraction: 0.35,
            ..Default::default()
        };
        assert_eq!(s.corrupted_count(), 7);
        let s = ExperimentScenario {
            k: 30,
            corrupt_fraction: 0.1,
            ..Default::default()
        };
        assert_eq!(s.corrupted_count(), 3);
    }
}
