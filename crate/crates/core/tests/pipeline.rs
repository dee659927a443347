mod common;

use std::time::Instant;

use rand::Rng;
use rfica::alignment::{align_signs, choose_benchmark, signed_perm_distance, BenchmarkStrategy, SignedPermutation};
use rfica::clustering::ClusterModel;
use rfica::diagnostics::{
    check_corollary37_scaling, check_lemma34, compute_epsilons, homogeneous_trial, ScalingConfig,
};
use rfica::experiment::{self, ExperimentConfig};
use rfica::local_solver::{contrast, fastica_symmetric, prewhiten, solve_client, LocalEstimate, SolverConfig};
use rfica::model_gen::{generate_mixing, make_scenario, ExperimentScenario};
use rfica::robust_agg::{rf_ica, AggregateConfig};
use rfica::{seed, Matrix};

use common::*;

fn single_client(n: usize, seed: u64) -> (Matrix, rfica::model_gen::ClientDataset) {
    let sc = make_scenario(&ExperimentScenario { k: 1, n_normal: n, corrupt_fraction: 0.0, seed, ..Default::default() })
        .unwrap();
    (sc.mixing.matrix().clone(), sc.clients.into_iter().next().unwrap())
}

#[test]
fn local_error_at_n5000_over_20_seeds() {
    for s in 0..20 {
        let (a, ds) = single_client(5000, s);
        let est = solve_client(&ds, &SolverConfig { seed: s, ..Default::default() });
        let err = signed_perm_distance(&est.a_tilde, &a).unwrap().0;
        assert!(est.converged && err <= 0.25, "seed {s}: error {err}");
        let gram = est.a_tilde.transpose() * &est.a_tilde;
        assert!((gram - Matrix::identity(10, 10)).norm() <= 1e-5);
        assert!(est.objective_final >= est.objective_initial);
    }
}

#[test]
fn fifty_samples_is_the_corrupted_regime() {
    let bad = (0..20)
        .filter(|&s| {
            let (a, ds) = single_client(50, s);
            let est = solve_client(&ds, &SolverConfig { seed: s, ..Default::default() });
            est.is_failed() || !est.converged || signed_perm_distance(&est.a_tilde, &a).unwrap().0 >= 0.5
        })
        .count();
    assert!(bad >= 14, "only {bad}/20 runs degraded");
}

#[test]
fn local_error_rate_in_n() {
    let ns = [1000usize, 4000, 16000];
    let means: Vec<f64> = ns
        .iter()
        .map(|&n| {
            (0..20)
                .map(|s| {
                    let (a, ds) = single_client(n, 100 + s);
                    let est = solve_client(&ds, &SolverConfig { seed: s, ..Default::default() });
                    signed_perm_distance(&est.a_tilde, &a).unwrap().0 / 10f64.sqrt()
                })
                .sum::<f64>()
                / 20.0
        })
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = rfica::diagnostics::loglog_slope(&xs, &means).unwrap();
    assert!((-0.65..=-0.35).contains(&slope), "slope {slope}, means {means:?}");
}

#[test]
fn fastica_objective_does_not_decrease() {
    let (_, ds) = single_client(3000, 8);
    let (yw, _) = prewhiten(&ds.observations).unwrap();
    let est = fastica_symmetric(&yw, &SolverConfig { seed: 3, ..Default::default() }).unwrap();
    assert!(est.converged);
    let q = est.a_tilde.transpose();
    assert!((contrast(&q, &yw) - est.objective_final).abs() <= 1e-9 * est.objective_final);
    assert!(est.objective_final >= est.objective_initial);
}

#[test]
fn align_signs_enumerates_all_signed_permutations_at_r3() {
    let a = generate_mixing(3, 5).unwrap().into_matrix();
    for perm in permutations(3) {
        for mask in 0..8u32 {
            let signs = (0..3).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
            let p = SignedPermutation::new(perm.clone(), signs).unwrap();
            let ests = vec![
                LocalEstimate::from_matrix(0, a.clone(), 10),
                LocalEstimate::from_matrix(1, p.apply(&a), 5),
            ];
            let (aligned, _) = align_signs(&ests, 0).unwrap();
            let unsigned = SignedPermutation::new(perm.clone(), vec![1; 3]).unwrap().apply(&a);
            assert!((&aligned[1].a_tilde - unsigned).norm() < 1e-12);
            let (twice, _) = align_signs(&aligned, 0).unwrap();
            assert_eq!(twice[1].a_tilde, aligned[1].a_tilde);
        }
    }
}

#[test]
fn failed_clients_are_excluded() {
    let a = generate_mixing(4, 2).unwrap().into_matrix();
    let mut rng = seed::rng(4);
    let mut ests = noiseless_estimates(&a, 6, &mut rng);
    ests.push(LocalEstimate::failed(6, 4, 3, "n_k < r"));
    let out = rf_ica(&ests, &AggregateConfig::default()).unwrap();
    assert!(signed_perm_distance(&out.a_bar, &a).unwrap().0 < 1e-10);
    assert_eq!(out.cluster_step.unwrap().pool.len(), 24);
    let eps = compute_epsilons(&ests, &a).unwrap();
    assert_eq!(eps.k(), 6);
}

#[test]
fn best_kmeans_loss_avoids_a_corrupted_benchmark() {
    let mut good = 0;
    for s in 0..20u64 {
        let params = ExperimentScenario { k: 10, corrupt_fraction: 0.0, seed: s, ..Default::default() };
        let sc = make_scenario(&params).unwrap();
        let mut ests = experiment::solve_all(&sc, &SolverConfig { seed: s, ..Default::default() });
        // Client 0 only sees 50 samples of the same model.
        let few = make_scenario(&ExperimentScenario { k: 1, n_normal: 50, seed: 500 + s, ..params }).unwrap();
        let mut ds = few.clients[0].clone();
        ds.observations = sc.mixing.matrix() * &ds.sources;
        ds.n_k = 50;
        ests[0] = LocalEstimate { client_id: 0, ..solve_client(&ds, &SolverConfig { seed: s, ..Default::default() }) };
        let b = choose_benchmark(&ests, BenchmarkStrategy::BestKmeansLoss { restarts: 10, seed: s }).unwrap();
        if b != 0 {
            good += 1;
        }
    }
    assert!(good >= 18, "{good}/20");
}

#[test]
fn epsilons_match_double_loop_oracle() {
    let mut rng = seed::rng(12);
    for _ in 0..40 {
        let r = rng.random_range(2..=5);
        let k = rng.random_range(1..=8);
        let a = generate_mixing(r, rng.random()).unwrap().into_matrix();
        let ests: Vec<LocalEstimate> = (0..k)
            .map(|id| {
                let noise = gaussian_matrix(r, r, &mut rng) * rng.random_range(0.0..0.3);
                LocalEstimate::from_matrix(id, random_signed_perm(r, &mut rng).apply(&a) + noise, 100)
            })
            .collect();
        let eps = compute_epsilons(&ests, &a).unwrap();
        let (per_col, eps_a) = brute_epsilons(&ests, &a);
        for (x, y) in eps.per_column.iter().flatten().zip(per_col.iter().flatten()) {
            assert!((x - y).abs() <= 1e-12);
        }
        for (x, y) in eps.eps_a.iter().zip(&eps_a) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!((eps.eps_total - eps_a.iter().sum::<f64>()).abs() <= 1e-12);
        let mut delta = f64::INFINITY;
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    delta = delta.min((a.column(i) - a.column(j)).norm_squared());
                }
            }
        }
        assert!((eps.delta - delta).abs() <= 1e-12);
    }
}

#[test]
fn one_misclustered_low_error_point_keeps_quantile_transfer() {
    // One move costs s_a = 1/K, which the rate bound 16 eps_a / Delta only
    // allows for large K with eps near the signal-to-noise limit.
    let r = 3;
    let a = generate_mixing(r, 21).unwrap().into_matrix();
    let mut rng = seed::rng(21);
    let ests: Vec<LocalEstimate> = (0..100)
        .map(|id| LocalEstimate::from_matrix(id, &a + gaussian_matrix(r, r, &mut rng) * 0.018, 100))
        .collect();
    let eps = compute_epsilons(&ests, &a).unwrap();
    assert!(eps.snr_condition_holds());
    let mut labels = eps.true_labels();
    // Move the lowest-error atom of cluster 0 into cluster 1.
    let errors = eps.atom_errors();
    let moved = (0..labels.len())
        .filter(|&i| labels[i] == 0)
        .min_by(|&i, &j| errors[i].total_cmp(&errors[j]))
        .unwrap();
    labels[moved] = 1;
    let model = ClusterModel {
        centroids: vec![vec![0.0; r]; r],
        labels,
        objective: 0.0,
        restarts_run: 1,
        restart_objectives: vec![0.0],
        best_restart: 0,
    };
    for p in [0.6, 0.8, 1.0] {
        let c = check_lemma34(&eps, &model, p).unwrap();
        // Verify by enumerating the breakpoints of every estimated cluster.
        for a_idx in 0..r {
            let q = rfica::robust_agg::sample_quantile(&eps.true_cluster_errors(a_idx), p).unwrap();
            let mut est: Vec<f64> = (0..errors.len()).filter(|&i| model.labels[i] == a_idx).map(|i| errors[i]).collect();
            est.sort_by(f64::total_cmp);
            let m = est.len() as f64;
            let exists = (1..=est.len())
                .any(|j| est[j - 1] == q && j as f64 / m >= p / (1.0 + 16.0 * eps.inverse_snr()));
            assert_eq!(c.per_cluster[a_idx], Some(exists), "p={p} cluster {a_idx}");
        }
        assert!(c.ok, "p={p}: {:?}", c.reasons);
    }
}

#[test]
fn clean_trial_has_rf_and_centroids_close() {
    let cfg = ExperimentConfig::from_toml_str("corrupt_fraction = [0.0]\ndefault_corrupt_fraction = 0.0\ntrials = 5").unwrap();
    let res = experiment::run_sweep(&cfg).unwrap();
    let cell = cfg.cells()[0];
    let rf = res.summary(&cell, "rf_ica").unwrap().mean;
    let fc = res.summary(&cell, "fica_centers").unwrap().mean;
    assert!((rf - fc).abs() <= 0.3 * rf.min(fc), "rf {rf} fc {fc}");
}

#[test]
fn smoke_grid_finishes_within_budget() {
    let cfg = ExperimentConfig::from_toml_str(
        "r = 5\nK = [10]\ndefault_K = 10\nn_normal = 1000\ntrials = 2\nsweep_mode = \"grid\"",
    )
    .unwrap();
    let t = Instant::now();
    let res = experiment::run_sweep(&cfg).unwrap();
    assert!(t.elapsed().as_secs_f64() < 60.0);
    assert_eq!(res.rows.len(), 2 * 4);
    assert!(res.panels.is_empty());
}

#[test]
fn scaling_control_and_dimension_monotonicity() {
    let mut control = ScalingConfig::homogeneous(5, 10, &[2000], 10, 3);
    control.points = vec![(1000.0, 2000), (4000.0, 2000), (16000.0, 2000)];
    let res = check_corollary37_scaling(&control).unwrap();
    assert!((-0.1..=0.1).contains(&res.slope), "control slope {}", res.slope);

    let mean = |r: usize| (0..8).map(|s| homogeneous_trial(r, 10, 3000, 0.1, 5, s).unwrap()).sum::<f64>() / 8.0;
    let (small, large) = (mean(4), mean(8));
    assert!(large > small, "r=4: {small}, r=8: {large}");
}
