use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Axis, Cell, ExperimentConfig, MethodSpec, SweepMode};
use crate::alignment::{signed_perm_distance, BenchmarkChoice, BenchmarkStrategy};
use crate::diagnostics::{check_lemma31, compute_epsilons, theory_report};
use crate::local_solver::{solve_client, InitMode, LocalEstimate, SolverConfig};
use crate::model_gen::{generate_mixing, make_scenario, Scenario};
use crate::par::*;
use crate::robust_agg::{aggregate, cluster_step, AggregateConfig, AggregationResult, ClusterStep, MethodTag};
use crate::seed;
use crate::{Matrix, Result};

/// One CSV row: one method on one scenario instantiation.
///
/// Diagnostic columns are empty where they do not apply: the bound checks
/// need a clustering, the GM checks need RF-ICA. A failed method leaves
/// `frob_error` as NaN and records the reason in `failure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub corrupt_fraction: f64,
    pub corrupt_n: usize,
    pub trial: usize,
    pub seed: u64,
    pub frob_error: f64,
    pub runtime_ms: f64,
    pub eps_total: Option<f64>,
    pub delta: Option<f64>,
    pub snr_ok: Option<bool>,
    pub lemma31_ok: Option<bool>,
    pub lemma33_ok: Option<bool>,
    pub lemma34_ok: Option<bool>,
    pub thm35_ok: Option<bool>,
    pub thm35_bound: Option<f64>,
    #[serde(skip)]
    pub failure: Option<String>,
}

impl TrialResult {
    fn blank(method: MethodSpec, cell: &Cell, trial: usize, seed: u64) -> Self {
        Self {
            method: method.label(),
            k: cell.k,
            corrupt_fraction: cell.corrupt_fraction,
            corrupt_n: cell.corrupt_n,
            trial,
            seed,
            frob_error: f64::NAN,
            runtime_ms: 0.0,
            eps_total: None,
            delta: None,
            snr_ok: None,
            lemma31_ok: None,
            lemma33_ok: None,
            lemma34_ok: None,
            thm35_ok: None,
            thm35_bound: None,
            failure: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some() || !self.frob_error.is_finite()
    }
}

/// Local estimates for every client under one initialization regime.
pub fn solve_all(scenario: &Scenario, cfg: &SolverConfig) -> Vec<LocalEstimate> {
    scenario.clients.par_iter().map(|c| solve_client(c, cfg)).collect()
}

fn solver_config(config: &ExperimentConfig, trial_seed: u64, shared_init: bool) -> Result<SolverConfig> {
    let init_mode = if shared_init {
        let q = generate_mixing(config.r, seed::mix(trial_seed, seed::STREAM_SHARED_INIT))?;
        InitMode::Shared(q.into_matrix())
    } else {
        InitMode::RandomOrthogonal
    };
    Ok(SolverConfig {
        max_iters: config.max_iters,
        tol: config.tol,
        init_mode,
        seed: seed::mix(trial_seed, seed::STREAM_SOLVER),
    })
}

fn aggregate_config(config: &ExperimentConfig, trial_seed: u64) -> AggregateConfig {
    let seed = seed::mix(trial_seed, seed::STREAM_KMEANS);
    let benchmark = match config.benchmark {
        BenchmarkChoice::LargestN => BenchmarkStrategy::LargestN,
        BenchmarkChoice::BestKmeansLoss => BenchmarkStrategy::BestKmeansLoss {
            restarts: config.kmeans_restarts,
            seed,
        },
    };
    AggregateConfig {
        benchmark,
        kmeans_restarts: config.kmeans_restarts,
        seed,
        ..Default::default()
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn fill_diagnostics(
    row: &mut TrialResult,
    estimates: &[LocalEstimate],
    result: &AggregationResult,
    a_star: &Matrix,
) -> Result<()> {
    let eps = compute_epsilons(estimates, a_star)?;
    row.eps_total = Some(eps.eps_total);
    row.delta = Some(eps.delta);
    row.snr_ok = Some(eps.snr_condition_holds());
    match result.method {
        MethodTag::RfIca => {
            let report = theory_report(estimates, result, a_star)?;
            row.lemma31_ok = Some(report.lemma31_ok());
            row.lemma33_ok = Some(report.lemma33_ok);
            row.lemma34_ok = Some(report.lemma34_ok);
            row.thm35_ok = Some(report.thm35_ok);
            row.thm35_bound = Some(report.thm35_bound);
        }
        MethodTag::FicaCenters => {
            let step = result.cluster_step.as_ref().expect("clustering method");
            let l31 = check_lemma31(&eps, &step.model, a_star)?;
            row.lemma31_ok = Some(l31.center_ok && l31.srate_ok);
        }
        MethodTag::SimpleMean | MethodTag::SimpleMedian => {}
    }
    Ok(())
}

/// Runs every configured method on one scenario instantiation.
///
/// Rows come back in method order. Failures of individual methods are
/// recorded in their rows; only scenario generation errors propagate.
pub fn run_trial(config: &ExperimentConfig, cell: &Cell, trial: usize) -> Result<Vec<TrialResult>> {
    let trial_seed = config.trial_seed(cell, trial);
    let scenario = make_scenario(&config.scenario(cell, trial))?;
    let a_star = scenario.mixing.matrix();
    let agg_cfg = aggregate_config(config, trial_seed);
    let specs = config.method_specs();

    let mut rows = Vec::with_capacity(specs.len());
    for shared_init in [false, true] {
        let group: Vec<MethodSpec> = specs.iter().copied().filter(|m| m.shared_init == shared_init).collect();
        if group.is_empty() {
            continue;
        }
        let estimates = solve_all(&scenario, &solver_config(config, trial_seed, shared_init)?);

        // RF-ICA and the centroid baseline share one clustering step.
        let mut shared_step: Option<(std::result::Result<ClusterStep, String>, f64)> = None;
        for method in group {
            let mut row = TrialResult::blank(method, cell, trial, trial_seed);
            let start = Instant::now();
            let outcome = if method.tag.uses_clustering() {
                let (step, step_ms) = shared_step.get_or_insert_with(|| {
                    let t = Instant::now();
                    let s = cluster_step(&estimates, &agg_cfg).map_err(|e| e.to_string());
                    (s, elapsed_ms(t))
                });
                let t = Instant::now();
                let out = step
                    .clone()
                    .map_err(crate::Error::Empty)
                    .and_then(|s| aggregate(s, method.tag, &agg_cfg));
                row.runtime_ms = *step_ms + elapsed_ms(t);
                out
            } else {
                let out = AggregationResult::run(method.tag, &estimates, &agg_cfg);
                row.runtime_ms = elapsed_ms(start);
                out
            };
            let scored = outcome.and_then(|res| {
                row.frob_error = signed_perm_distance(&res.a_bar, a_star)?.0;
                if config.diagnostics {
                    fill_diagnostics(&mut row, &estimates, &res, a_star)?;
                }
                Ok(())
            });
            if let Err(e) = scored {
                warn!("{} K={} f={} n_c={} trial {trial}: {e}", method, cell.k, cell.corrupt_fraction, cell.corrupt_n);
                row.failure = Some(e.to_string());
            }
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| {
        let ka: MethodSpec = a.method.parse().expect("own label");
        let kb: MethodSpec = b.method.parse().expect("own label");
        ka.cmp(&kb)
    });
    Ok(rows)
}

/// Mean and standard error of one method in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(rename = "K")]
    pub k: usize,
    pub corrupt_fraction: f64,
    pub corrupt_n: usize,
    pub method: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub failures: usize,
}

/// Long-format plot series for one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: f64,
    pub method: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by (cell, trial, method).
    pub rows: Vec<TrialResult>,
    /// Ordered by (cell, method).
    pub summaries: Vec<CellSummary>,
    /// One entry per panel axis in panels mode, empty in grid mode.
    pub panels: Vec<(Axis, Vec<PlotPoint>)>,
    pub failures: Vec<String>,
}

impl SweepResult {
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn summary(&self, cell: &Cell, method: &str) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| {
            s.k == cell.k
                && s.corrupt_n == cell.corrupt_n
                && s.corrupt_fraction == cell.corrupt_fraction
                && s.method == method
        })
    }
}

/// Sample mean and standard error `sd / sqrt(n)`; zero error for one value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every (cell, trial) pair in parallel and collects rows in
/// (cell, trial, method) order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    info!(
        "sweep: {} cells x {} trials, {} methods, {} threads",
        cells.len(),
        config.trials,
        config.method_specs().len(),
        current_threads()
    );
    let outcomes: Vec<Result<Vec<TrialResult>>> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(config, &cells[c], t))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(c, t), outcome) in jobs.iter().zip(outcomes) {
        let cell = &cells[c];
        match outcome {
            Ok(mut trial_rows) => {
                for row in &trial_rows {
                    if let Some(f) = &row.failure {
                        failures.push(format!("{} K={} f={} n_c={} trial {}: {f}", row.method, cell.k, cell.corrupt_fraction, cell.corrupt_n, t));
                    }
                }
                rows.append(&mut trial_rows);
            }
            Err(e) => {
                failures.push(format!("K={} f={} n_c={} trial {t}: {e}", cell.k, cell.corrupt_fraction, cell.corrupt_n));
                for m in config.method_specs() {
                    let mut row = TrialResult::blank(m, cell, t, config.trial_seed(cell, t));
                    row.failure = Some(e.to_string());
                    rows.push(row);
                }
            }
        }
    }

    let mut by_cell: BTreeMap<(usize, String), Vec<&TrialResult>> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        for row in rows.iter().filter(|r| {
            r.k == cell.k && r.corrupt_n == cell.corrupt_n && r.corrupt_fraction == cell.corrupt_fraction
        }) {
            by_cell.entry((i, row.method.clone())).or_default().push(row);
        }
    }
    let mut summaries: Vec<CellSummary> = by_cell
        .into_iter()
        .map(|((i, method), rs)| {
            let errs: Vec<f64> = rs.iter().map(|r| r.frob_error).collect();
            let (mean, stderr) = mean_stderr(&errs);
            CellSummary {
                k: cells[i].k,
                corrupt_fraction: cells[i].corrupt_fraction,
                corrupt_n: cells[i].corrupt_n,
                method,
                mean,
                stderr,
                trials: rs.len(),
                failures: rs.iter().filter(|r| r.is_failed()).count(),
            }
        })
        .collect();
    summaries.sort_by(|a, b| {
        let ma: MethodSpec = a.method.parse().expect("own label");
        let mb: MethodSpec = b.method.parse().expect("own label");
        let ia = cells.iter().position(|c| c.k == a.k && c.corrupt_n == a.corrupt_n && c.corrupt_fraction == a.corrupt_fraction);
        let ib = cells.iter().position(|c| c.k == b.k && c.corrupt_n == b.corrupt_n && c.corrupt_fraction == b.corrupt_fraction);
        ia.cmp(&ib).then(ma.cmp(&mb))
    });

    let mut result = SweepResult {
        rows,
        summaries,
        panels: Vec::new(),
        failures,
    };
    if config.sweep_mode == SweepMode::Panels {
        result.panels = config
            .panels()
            .into_iter()
            .map(|(axis, panel_cells)| {
                let points = panel_cells
                    .iter()
                    .flat_map(|cell| {
                        config.method_specs().into_iter().filter_map(|m| {
                            result.summary(cell, &m.label()).map(|s| PlotPoint {
                                x: cell.axis_value(axis),
                                method: s.method.clone(),
                                mean: s.mean,
                                stderr: s.stderr,
                            })
                        })
                    })
                    .collect();
                (axis, points)
            })
            .collect();
    }
    if result.has_failures() {
        warn!("sweep finished with {} failures", result.failures.len());
    }
    Ok(result)
}
