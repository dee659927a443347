//! Ground-truth error quantities and empirical checks of the recovery bounds.
//!
//! Everything here needs the true mixing matrix and therefore only runs in
//! simulation. Signs are resolved per column before measuring errors, so all
//! quantities are invariant to the sign ambiguity of the local estimates.
//!
//! A check whose hypotheses fail is a vacuous pass; the reason is recorded.

use serde::{Deserialize, Serialize};

use crate::alignment::{best_label_permutation, misclustering_rates, signed_perm_distance};
use crate::assignment;
use crate::clustering::ClusterModel;
use crate::local_solver::{solve_client, InitMode, LocalEstimate, SolverConfig};
use crate::model_gen::{column_separation, make_scenario, ExperimentScenario};
use crate::par::*;
use crate::robust_agg::{gm_error_bound, rf_ica, AggregateConfig, AggregationResult};
use crate::seed;
use crate::{Error, Matrix, Result};

/// Slack on the GM error check, covering the Weiszfeld stopping tolerance.
pub const GM_CHECK_SLACK: f64 = 1e-8;

/// Absolute slack on the other bound checks, covering rounding in centroids
/// and norms when a bound is exactly zero.
pub const BOUND_SLACK: f64 = 1e-12;

/// Per-column errors of every usable client against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epsilons {
    /// Client ids of the non-failed estimates, in input order.
    pub client_ids: Vec<usize>,
    /// `sigma*(k, i)`: true column matched to column `i` of client `k`.
    pub sigma_star: Vec<Vec<usize>>,
    /// `eps^(k)_i`, distance to the matched true column after the best sign.
    pub per_column: Vec<Vec<f64>>,
    /// `eps_a = (1/K) sum_{(k,i) in C*_a} (eps^(k)_i)^2`.
    pub eps_a: Vec<f64>,
    /// `eps = sum_a eps_a`.
    pub eps_total: f64,
    /// `Delta = min_{a != b} ||A*_a - A*_b||^2`.
    pub delta: f64,
}

impl Epsilons {
    pub fn k(&self) -> usize {
        self.client_ids.len()
    }

    pub fn r(&self) -> usize {
        self.eps_a.len()
    }

    /// True labels in atom-pool order (usable clients, then columns).
    pub fn true_labels(&self) -> Vec<usize> {
        self.sigma_star.iter().flatten().copied().collect()
    }

    /// `eps^(k)_i` in atom-pool order.
    pub fn atom_errors(&self) -> Vec<f64> {
        self.per_column.iter().flatten().copied().collect()
    }

    /// Errors of the true cluster `C*_a`.
    pub fn true_cluster_errors(&self, a: usize) -> Vec<f64> {
        self.true_labels()
            .into_iter()
            .zip(self.atom_errors())
            .filter(|(l, _)| *l == a)
            .map(|(_, e)| e)
            .collect()
    }

    /// `8 sqrt(7 eps / Delta) <= 1`.
    pub fn snr_condition_holds(&self) -> bool {
        8.0 * (7.0 * self.eps_total / self.delta).sqrt() <= 1.0
    }

    /// `eps / Delta`.
    pub fn inverse_snr(&self) -> f64 {
        self.eps_total / self.delta
    }
}

/// Computes `sigma*`, `eps^(k)_i`, `eps_a`, `eps` and `Delta`.
pub fn compute_epsilons(estimates: &[LocalEstimate], a_star: &Matrix) -> Result<Epsilons> {
    let r = a_star.ncols();
    let mut out = Epsilons {
        client_ids: Vec::new(),
        sigma_star: Vec::new(),
        per_column: Vec::new(),
        eps_a: vec![0.0; r],
        eps_total: 0.0,
        delta: column_separation(a_star),
    };
    for est in estimates.iter().filter(|e| !e.is_failed()) {
        let (_, p) = signed_perm_distance(&est.a_tilde, a_star)?;
        let errs: Vec<f64> = (0..r)
            .map(|i| {
                let col = est.a_tilde.column(i);
                let target = a_star.column(p.perm[i]) * f64::from(p.signs[i]);
                (col - target).norm()
            })
            .collect();
        out.client_ids.push(est.client_id);
        out.sigma_star.push(p.perm);
        out.per_column.push(errs);
    }
    let k = out.k();
    if k == 0 {
        return Err(Error::NoBenchmark);
    }
    for (labels, errs) in out.sigma_star.iter().zip(&out.per_column) {
        for (&a, &e) in labels.iter().zip(errs) {
            out.eps_a[a] += e * e / k as f64;
        }
    }
    out.eps_total = out.eps_a.iter().sum();
    Ok(out)
}

fn order_stats(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Breakpoint minimizing `2p/(2p-1) Q(p; values)` over `p in (lower, 1]`,
/// `lower >= 1/2`. Returns `(p, Q(p))`, or `None` if no breakpoint qualifies.
pub fn best_quantile_level(values: &[f64], lower: f64) -> Option<(f64, f64)> {
    let v = order_stats(values);
    let m = v.len();
    let lower = lower.max(0.5);
    (1..=m)
        .filter_map(|j| {
            let p = j as f64 / m as f64;
            (p > lower).then(|| (p, v[j - 1], 2.0 * p / (2.0 * p - 1.0) * v[j - 1]))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(p, q, _)| (p, q))
}

/// `min_pi max_i ||theta_i - (+-)A*_{pi(i)}||` over permutations.
pub fn bottleneck_center_error(centroids: &[Vec<f64>], a_star: &Matrix) -> Result<f64> {
    let r = a_star.ncols();
    if centroids.len() != r {
        return Err(Error::DimensionMismatch {
            expected: format!("{r} centroids"),
            actual: format!("{}", centroids.len()),
        });
    }
    let dist: Vec<Vec<f64>> = centroids
        .iter()
        .map(|c| {
            let c = nalgebra::DVector::from_column_slice(c);
            (0..r)
                .map(|j| {
                    let s = a_star.column(j);
                    (&c - s).norm().min((&c + s).norm())
                })
                .collect()
        })
        .collect();
    let mut thresholds: Vec<f64> = dist.iter().flatten().copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    // Smallest threshold admitting a perfect matching on edges <= threshold.
    let (mut lo, mut hi) = (0, thresholds.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let t = thresholds[mid];
        let cost: Vec<Vec<f64>> = dist
            .iter()
            .map(|row| row.iter().map(|&d| if d <= t { 0.0 } else { 1.0 }).collect())
            .collect();
        if assignment::solve(&cost)?.cost == 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(thresholds[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Check {
    pub hypothesis: bool,
    pub center_error: f64,
    /// `sqrt(7 eps)`.
    pub center_bound: f64,
    pub center_ok: bool,
    pub s_rates: Vec<f64>,
    /// `16 eps_a / Delta`.
    pub s_bounds: Vec<f64>,
    pub srate_ok: bool,
    pub reason: Option<String>,
}

/// k-means center and misclustering-rate bounds under `8 sqrt(7 eps/Delta) <= 1`.
pub fn check_lemma31(eps: &Epsilons, model: &ClusterModel, a_star: &Matrix) -> Result<Lemma31Check> {
    let r = eps.r();
    let s_rates = misclustering_rates(&model.labels, &eps.true_labels(), eps.k(), r)?;
    let center_error = bottleneck_center_error(&model.centroids, a_star)?;
    let center_bound = (7.0 * eps.eps_total).sqrt();
    let s_bounds: Vec<f64> = eps.eps_a.iter().map(|e| 16.0 * e / eps.delta).collect();
    let hypothesis = eps.snr_condition_holds();
    let (center_ok, srate_ok, reason) = if hypothesis {
        (
            center_error <= center_bound + BOUND_SLACK,
            s_rates.iter().zip(&s_bounds).all(|(s, b)| *s <= b + BOUND_SLACK),
            None,
        )
    } else {
        (
            true,
            true,
            Some(format!(
                "vacuous: 8 sqrt(7 eps/Delta) = {:.4} > 1",
                8.0 * (7.0 * eps.inverse_snr()).sqrt()
            )),
        )
    };
    Ok(Lemma31Check {
        hypothesis,
        center_error,
        center_bound,
        center_ok,
        s_rates,
        s_bounds,
        srate_ok,
        reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma34Check {
    pub ok: bool,
    /// Per true cluster: `None` when skipped, else whether some `p_bar` exists.
    pub per_cluster: Vec<Option<bool>>,
    pub reasons: Vec<String>,
}

/// Quantile transfer between true and estimated clusters.
///
/// For each true cluster `a` with `Q_a(p) < sqrt(Delta)/4`, searches the
/// breakpoints `j/m` of the estimated cluster matched to `a` for one whose
/// order statistic equals `Q_a(p)` and with `j/m >= p / (1 + 16 eps/Delta)`.
pub fn check_lemma34(eps: &Epsilons, model: &ClusterModel, p: f64) -> Result<Lemma34Check> {
    check_lemma34_levels(eps, model, &vec![Some(p); eps.r()])
}

fn check_lemma34_levels(eps: &Epsilons, model: &ClusterModel, levels: &[Option<f64>]) -> Result<Lemma34Check> {
    let r = eps.r();
    let true_labels = eps.true_labels();
    let errors = eps.atom_errors();
    let (pi, _) = best_label_permutation(&model.labels, &true_labels, r)?;
    let mut out = Lemma34Check {
        ok: true,
        per_cluster: vec![None; r],
        reasons: Vec::new(),
    };
    if !eps.snr_condition_holds() {
        out.reasons.push("vacuous: 8 sqrt(7 eps/Delta) > 1".into());
        return Ok(out);
    }
    let shrink = 1.0 / (1.0 + 16.0 * eps.inverse_snr());
    for a in 0..r {
        let Some(p) = levels[a] else {
            out.reasons.push(format!("cluster {a}: no quantile level"));
            continue;
        };
        let q_true = crate::robust_agg::sample_quantile(&eps.true_cluster_errors(a), p)?;
        if !(q_true < eps.delta.sqrt() / 4.0) {
            out.reasons.push(format!(
                "cluster {a}: skipped, Q_a(p) = {q_true:.4} >= sqrt(Delta)/4"
            ));
            continue;
        }
        let est_errors: Vec<f64> = model
            .labels
            .iter()
            .zip(&errors)
            .filter(|(&b, _)| pi[b] == a)
            .map(|(_, &e)| e)
            .collect();
        let v = order_stats(&est_errors);
        let m = v.len();
        let found = (1..=m).any(|j| v[j - 1] == q_true && j as f64 / m as f64 >= shrink * p);
        if !found {
            out.ok = false;
            out.reasons.push(format!("cluster {a}: no p_bar reproduces Q_a({p:.4}) = {q_true:.4}"));
        }
        out.per_cluster[a] = Some(found);
    }
    Ok(out)
}

/// `p_a` over `(1/2 + 8 eps/Delta, 1]` and `Q_a(p_a)` for every true cluster.
pub fn optimal_levels(eps: &Epsilons) -> Vec<Option<(f64, f64)>> {
    let lower = 0.5 + 8.0 * eps.inverse_snr();
    (0..eps.r())
        .map(|a| best_quantile_level(&eps.true_cluster_errors(a), lower))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem35Check {
    pub hypothesis: bool,
    pub ok: bool,
    /// Per true column `a`: `2 p_a / (2 p_a - 1 - 16 eps/Delta) Q_a(p_a)`.
    pub bounds: Vec<f64>,
    /// Per true column: error of the aggregated column matched to it.
    pub errors: Vec<f64>,
    /// Largest per-column bound (infinite when vacuous).
    pub bound: f64,
    pub reason: Option<String>,
}

/// Per-column RF-ICA error bound from the error quantiles of the true clusters.
/// The column matching comes from [`signed_perm_distance`].
pub fn check_theorem35(eps: &Epsilons, rf: &AggregationResult, a_star: &Matrix) -> Result<Theorem35Check> {
    let r = eps.r();
    let (_, p) = signed_perm_distance(&rf.a_bar, a_star)?;
    let mut errors = vec![0.0; r];
    for (i, (&t, &s)) in p.perm.iter().zip(&p.signs).enumerate() {
        errors[t] = (rf.a_bar.column(i) - a_star.column(t) * f64::from(s)).norm();
    }
    let vacuous = |reason: String| Theorem35Check {
        hypothesis: false,
        ok: true,
        bounds: vec![f64::INFINITY; r],
        errors: errors.clone(),
        bound: f64::INFINITY,
        reason: Some(reason),
    };
    if !eps.snr_condition_holds() {
        return Ok(vacuous("vacuous: 8 sqrt(7 eps/Delta) > 1".into()));
    }
    let inv_snr = eps.inverse_snr();
    let sqrt_delta_4 = eps.delta.sqrt() / 4.0;
    let mut bounds = Vec::with_capacity(r);
    for (a, level) in optimal_levels(eps).into_iter().enumerate() {
        let Some((p_a, q_a)) = level else {
            return Ok(vacuous(format!("vacuous: no level in (1/2 + 8 eps/Delta, 1] for column {a}")));
        };
        if !(q_a < sqrt_delta_4) {
            return Ok(vacuous(format!("vacuous: Q_{a}(p_a) = {q_a:.4} >= sqrt(Delta)/4")));
        }
        let denom = 2.0 * p_a - 1.0 - 16.0 * inv_snr;
        if !(denom > 0.0) {
            return Ok(vacuous(format!("vacuous: 2 p_a - 1 - 16 eps/Delta <= 0 for column {a}")));
        }
        bounds.push(2.0 * p_a / denom * q_a);
    }
    let ok = errors.iter().zip(&bounds).all(|(e, b)| *e <= b + BOUND_SLACK);
    let bound = bounds.iter().copied().fold(0.0, f64::max);
    Ok(Theorem35Check {
        hypothesis: true,
        ok,
        bounds,
        errors,
        bound,
        reason: None,
    })
}

/// Geometric-median error bound inside every RF-ICA cluster, measured against
/// the true column the cluster is matched to. Holds for any point set.
pub fn check_lemma33(rf: &AggregationResult, a_star: &Matrix) -> Result<bool> {
    let step = rf.cluster_step.as_ref().ok_or_else(|| {
        Error::InvalidParameter("GM bound check needs a clustering result".into())
    })?;
    let (_, p) = signed_perm_distance(&rf.a_bar, a_star)?;
    for (a, gm) in rf.gm.iter().enumerate() {
        let target: Vec<f64> = (a_star.column(p.perm[a]) * f64::from(p.signs[a]))
            .iter()
            .copied()
            .collect();
        let errors: Vec<f64> = step
            .model
            .members(a)
            .into_iter()
            .map(|i| distance(&step.pool.atoms[i].vector, &target))
            .collect();
        if distance(&gm.point, &target) > gm_error_bound(&errors) + GM_CHECK_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub eps_per_column: Vec<Vec<f64>>,
    pub eps_a: Vec<f64>,
    pub eps_total: f64,
    pub delta: f64,
    pub snr_condition_holds: bool,
    pub s_rates: Vec<f64>,
    pub lemma31_center_ok: bool,
    pub lemma31_srate_ok: bool,
    pub lemma33_ok: bool,
    pub lemma34_ok: bool,
    pub thm35_ok: bool,
    pub thm35_bound: f64,
    pub notes: Vec<String>,
}

impl TheoryReport {
    pub fn lemma31_ok(&self) -> bool {
        self.lemma31_center_ok && self.lemma31_srate_ok
    }

    /// Hypotheses hold and every check passes.
    pub fn all_pass_with_hypotheses(&self) -> bool {
        self.snr_condition_holds
            && self.thm35_bound.is_finite()
            && self.lemma31_ok()
            && self.lemma33_ok
            && self.lemma34_ok
            && self.thm35_ok
    }
}

/// Runs every check on one RF-ICA result. The quantile-coverage check is
/// evaluated at the levels `p_a` used by the final error bound.
pub fn theory_report(estimates: &[LocalEstimate], rf: &AggregationResult, a_star: &Matrix) -> Result<TheoryReport> {
    let eps = compute_epsilons(estimates, a_star)?;
    let step = rf.cluster_step.as_ref().ok_or_else(|| {
        Error::InvalidParameter("theory report needs a clustering result".into())
    })?;
    let l31 = check_lemma31(&eps, &step.model, a_star)?;
    let levels: Vec<Option<f64>> = optimal_levels(&eps).into_iter().map(|l| l.map(|(p, _)| p)).collect();
    let l34 = check_lemma34_levels(&eps, &step.model, &levels)?;
    let l33 = check_lemma33(rf, a_star)?;
    let t35 = check_theorem35(&eps, rf, a_star)?;
    let mut notes = Vec::new();
    notes.extend(l31.reason.clone());
    notes.extend(l34.reasons.clone());
    notes.extend(t35.reason.clone());
    Ok(TheoryReport {
        eps_per_column: eps.per_column.clone(),
        eps_a: eps.eps_a.clone(),
        eps_total: eps.eps_total,
        delta: eps.delta,
        snr_condition_holds: eps.snr_condition_holds(),
        s_rates: l31.s_rates,
        lemma31_center_ok: l31.center_ok,
        lemma31_srate_ok: l31.srate_ok,
        lemma33_ok: l33,
        lemma34_ok: l34.ok,
        thm35_ok: t35.ok,
        thm35_bound: t35.bound,
        notes,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("slope needs at least two matched points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Homogeneous-sample-size sweep for the RF-ICA error rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    pub r: usize,
    pub k: usize,
    /// `(axis value, samples per client)`. The axis value is what the slope is
    /// fitted against; equal to the sample size except in control runs.
    pub points: Vec<(f64, usize)>,
    pub trials: usize,
    pub sparsity: f64,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl ScalingConfig {
    pub fn homogeneous(r: usize, k: usize, sample_sizes: &[usize], trials: usize, seed: u64) -> Self {
        Self {
            r,
            k,
            points: sample_sizes.iter().map(|&n| (n as f64, n)).collect(),
            trials,
            sparsity: 0.1,
            kmeans_restarts: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    /// `(axis value, mean RF-ICA error)`.
    pub mean_errors: Vec<(f64, f64)>,
    pub slope: f64,
}

/// RF-ICA error on one homogeneous scenario.
pub fn homogeneous_trial(r: usize, k: usize, n: usize, sparsity: f64, restarts: usize, seed: u64) -> Result<f64> {
    let scenario = make_scenario(&ExperimentScenario {
        r,
        k,
        n_normal: n,
        n_corrupt: n,
        corrupt_fraction: 0.0,
        sparsity,
        seed,
    })?;
    let cfg = SolverConfig {
        seed: seed::mix(seed, seed::STREAM_SOLVER),
        init_mode: InitMode::RandomOrthogonal,
        ..Default::default()
    };
    let estimates: Vec<LocalEstimate> = scenario.clients.iter().map(|c| solve_client(c, &cfg)).collect();
    let agg = AggregateConfig {
        kmeans_restarts: restarts,
        seed: seed::mix(seed, seed::STREAM_KMEANS),
        ..Default::default()
    };
    let out = rf_ica(&estimates, &agg)?;
    Ok(signed_perm_distance(&out.a_bar, scenario.mixing.matrix())?.0)
}

/// Mean RF-ICA error per sweep point and the fitted log-log slope.
pub fn check_corollary37_scaling(cfg: &ScalingConfig) -> Result<ScalingResult> {
    let jobs: Vec<(usize, usize)> = (0..cfg.points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let n = cfg.points[p].1;
            let s = seed::mix_all(cfg.seed, &[p as u64, t as u64]);
            homogeneous_trial(cfg.r, cfg.k, n, cfg.sparsity, cfg.kmeans_restarts, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_errors: Vec<(f64, f64)> = cfg
        .points
        .iter()
        .enumerate()
        .map(|(p, &(x, _))| {
            let chunk = &errors[p * cfg.trials..(p + 1) * cfg.trials];
            (x, chunk.iter().sum::<f64>() / cfg.trials as f64)
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = mean_errors.iter().copied().unzip();
    Ok(ScalingResult {
        slope: loglog_slope(&xs, &ys)?,
        mean_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::SignedPermutation;
    use crate::model_gen::generate_mixing;

    fn permuted(a: &Matrix, id: usize) -> LocalEstimate {
        let r = a.ncols();
        let perm: Vec<usize> = (0..r).map(|i| (i + id) % r).collect();
        let signs = (0..r).map(|i| if (i + id) % 2 == 0 { 1 } else { -1 }).collect();
        LocalEstimate::from_matrix(id, SignedPermutation::new(perm, signs).unwrap().apply(a), 100)
    }

    #[test]
    fn noiseless_estimates_have_zero_error_and_pass() {
        let a = generate_mixing(4, 2).unwrap().into_matrix();
        let ests: Vec<_> = (0..6).map(|k| permuted(&a, k)).collect();
        let eps = compute_epsilons(&ests, &a).unwrap();
        assert!(eps.eps_total < 1e-24);
        assert!(eps.per_column.iter().flatten().all(|e| *e < 1e-12));
        assert!((eps.delta - 2.0).abs() < 1e-9);

        let rf = rf_ica(&ests, &AggregateConfig::default()).unwrap();
        let report = theory_report(&ests, &rf, &a).unwrap();
        assert!(report.snr_condition_holds);
        assert!(report.all_pass_with_hypotheses(), "{report:?}");
        assert!(report.thm35_bound < 1e-10);
        assert!(report.s_rates.iter().all(|s| *s == 0.0));
        let l34 = check_lemma34(&eps, &rf.cluster_step.as_ref().unwrap().model, 0.9).unwrap();
        assert!(l34.ok && l34.per_cluster.iter().all(|c| *c == Some(true)));
    }

    #[test]
    fn single_perturbed_column() {
        let a = generate_mixing(3, 9).unwrap().into_matrix();
        let mut ests: Vec<_> = (0..10).map(|k| permuted(&a, k)).collect();
        // Column 1 of client 4 estimates true column (1 + 4) % 3 = 2.
        let mut bump = nalgebra::DVector::zeros(3);
        bump[0] = 0.1;
        let col = ests[4].a_tilde.column(1) + bump;
        ests[4].a_tilde.set_column(1, &col);
        let eps = compute_epsilons(&ests, &a).unwrap();
        assert_eq!(eps.sigma_star[4][1], 2);
        assert!((eps.eps_a[2] - 0.001).abs() < 1e-15);
        assert!(eps.eps_a[0] < 1e-25 && eps.eps_a[1] < 1e-25);
        assert!((eps.eps_total - eps.eps_a.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn adversarial_instance_is_vacuous() {
        let a = generate_mixing(3, 1).unwrap().into_matrix();
        let mut ests: Vec<_> = (0..4).map(|k| permuted(&a, k)).collect();
        ests[0].a_tilde = generate_mixing(3, 50).unwrap().into_matrix();
        let rf = rf_ica(&ests, &AggregateConfig::default()).unwrap();
        let eps = compute_epsilons(&ests, &a).unwrap();
        assert!(!eps.snr_condition_holds());
        let l31 = check_lemma31(&eps, &rf.cluster_step.as_ref().unwrap().model, &a).unwrap();
        assert!(l31.center_ok && l31.srate_ok && l31.reason.is_some());
        let t35 = check_theorem35(&eps, &rf, &a).unwrap();
        assert!(t35.ok && !t35.hypothesis && t35.reason.is_some());
    }

    #[test]
    fn lemma34_skips_large_quantiles() {
        let a = generate_mixing(3, 4).unwrap().into_matrix();
        let ests: Vec<_> = (0..6).map(|k| permuted(&a, k)).collect();
        let mut eps = compute_epsilons(&ests, &a).unwrap();
        for e in eps.per_column.iter_mut().flatten() {
            *e = 1.0; // Q_a(p) = 1 >= sqrt(2)/4
        }
        let model = rf_ica(&ests, &AggregateConfig::default()).unwrap().cluster_step.unwrap().model;
        let c = check_lemma34(&eps, &model, 0.8).unwrap();
        assert!(c.ok);
        assert!(c.per_cluster.iter().all(Option::is_none));
        assert_eq!(c.reasons.len(), 3);
    }

    #[test]
    fn best_level_and_slope_helpers() {
        // n = 4: breakpoints 3/4 (factor 3) and 1 (factor 2).
        let v = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(best_quantile_level(&v, 0.5), Some((1.0, 0.4)));
        assert_eq!(best_quantile_level(&[0.1, 0.1, 0.1, 5.0], 0.5), Some((0.75, 0.1)));
        assert_eq!(best_quantile_level(&v, 1.0), None);
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bottleneck_matches_enumeration() {
        let a = generate_mixing(3, 6).unwrap().into_matrix();
        let centroids = vec![vec![0.3, -0.1, 0.9], vec![-0.5, 0.5, 0.2], vec![0.1, 0.8, -0.4]];
        let got = bottleneck_center_error(&centroids, &a).unwrap();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| {
                (0..3)
                    .map(|i| {
                        let c = nalgebra::DVector::from_column_slice(&centroids[i]);
                        let s = a.column(p[i]);
                        (&c - s).norm().min((&c + s).norm())
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(got, best);
    }
}
