//! `rfica`: generate scenarios, solve clients, aggregate stored estimates,
//! run sweeps and check the theory diagnostics.
//!
//! Exit codes: 0 on success, 1 on a hard error, 2 when a sweep finished with
//! failed rows.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rfica::alignment::{signed_perm_distance, BenchmarkChoice, BenchmarkStrategy};
use rfica::diagnostics::theory_report;
use rfica::experiment::io::{
    read_estimates, read_mixing, read_scenario, write_estimates, write_matrix_csv, write_scenario, write_sweep,
};
use rfica::experiment::{run_sweep, solve_all, ExperimentConfig, InitStudy, SweepMode};
use rfica::local_solver::{InitMode, LocalEstimate, SolverConfig};
use rfica::model_gen::{generate_mixing, make_scenario, ExperimentScenario};
use rfica::robust_agg::{aggregate, cluster_step, simple_aggregate, AggregateConfig, MethodTag, SimpleMode};
use rfica::Matrix;

#[derive(Debug, Parser)]
#[command(name = "rfica", version, about = "Robust one-shot federated ICA experiments")]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, env = "RFICA_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a generated scenario (mixing matrix and client observations) to disk.
    Generate(GenerateArgs),
    /// Solve every client of a stored scenario and write the local estimates.
    Solve(SolveArgs),
    /// Run aggregation methods on stored estimates.
    Aggregate(AggregateArgs),
    /// Run a full experiment sweep from a config file plus flag overrides.
    Sweep(SweepArgs),
    /// Theory diagnostics for RF-ICA on a stored scenario and its estimates.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    r: usize,
    #[arg(long = "K", visible_alias = "k", default_value_t = 30)]
    k: usize,
    #[arg(long, default_value_t = 5000)]
    n_normal: usize,
    #[arg(long, default_value_t = 300)]
    corrupt_n: usize,
    #[arg(long, default_value_t = 0.1)]
    corrupt_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    RandomOrthogonal,
    Shared,
    Identity,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::RandomOrthogonal)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchmarkArg {
    LargestN,
    BestKmeansLoss,
}

#[derive(Debug, Args)]
struct AggregateOptions {
    #[arg(long, default_value_t = 10)]
    kmeans_restarts: usize,
    #[arg(long, value_enum, default_value_t = BenchmarkArg::LargestN)]
    benchmark: BenchmarkArg,
    /// Seed for k-means seeding.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl AggregateOptions {
    fn config(&self) -> AggregateConfig {
        let benchmark = match self.benchmark {
            BenchmarkArg::LargestN => BenchmarkStrategy::LargestN,
            BenchmarkArg::BestKmeansLoss => BenchmarkStrategy::BestKmeansLoss {
                restarts: self.kmeans_restarts,
                seed: self.seed,
            },
        };
        AggregateConfig {
            benchmark,
            kmeans_restarts: self.kmeans_restarts,
            seed: self.seed,
            ..AggregateConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    estimates: PathBuf,
    /// Comma-separated method tags.
    #[arg(long, value_delimiter = ',', default_value = "rf_ica,fica_centers,simple_mean,simple_median")]
    methods: Vec<MethodTag>,
    /// Scenario directory whose `mixing.csv` scores each result.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Directory for one `<method>.csv` matrix per method.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: AggregateOptions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitStudyArg {
    RandomOrthogonal,
    Shared,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepModeArg {
    Panels,
    Grid,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long = "K", visible_alias = "k", value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    n_normal: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    corrupt_n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    corrupt_fraction: Option<Vec<f64>>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodTag>>,
    #[arg(long, value_enum)]
    init_mode: Option<InitStudyArg>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    output_path: Option<PathBuf>,
    #[arg(long, value_enum)]
    sweep_mode: Option<SweepModeArg>,
    #[arg(long, value_enum)]
    benchmark: Option<BenchmarkArg>,
    /// Skip the ground-truth diagnostic columns.
    #[arg(long)]
    no_diagnostics: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    estimates: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: AggregateOptions,
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command {
        Command::Generate(a) => generate(a).map(|_| ExitCode::SUCCESS),
        Command::Solve(a) => solve(a).map(|_| ExitCode::SUCCESS),
        Command::Aggregate(a) => aggregate_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Sweep(a) => sweep(a),
        Command::Check(a) => check(a).map(|_| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; ignoring thread count");
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> CliResult<()> {
    let params = ExperimentScenario {
        r: a.r,
        k: a.k,
        n_normal: a.n_normal,
        n_corrupt: a.corrupt_n,
        corrupt_fraction: a.corrupt_fraction,
        sparsity: a.sparsity,
        seed: a.seed,
    };
    let scenario = make_scenario(&params)?;
    write_scenario(&a.out, &params, &scenario)?;
    info!(
        "wrote {} clients ({} corrupted) to {}",
        scenario.clients.len(),
        scenario.corrupted_ids().len(),
        a.out.display()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> CliResult<()> {
    let (params, scenario) = read_scenario(&a.scenario)?;
    let init_mode = match a.init {
        InitArg::RandomOrthogonal => InitMode::RandomOrthogonal,
        InitArg::Shared => InitMode::Shared(generate_mixing(params.r, a.seed)?.into_matrix()),
        InitArg::Identity => InitMode::Identity,
    };
    let cfg = SolverConfig {
        max_iters: a.max_iters,
        tol: a.tol,
        init_mode,
        seed: a.seed,
    };
    cfg.validate()?;
    let estimates = solve_all(&scenario, &cfg);
    let failed = estimates.iter().filter(|e| e.is_failed()).count();
    write_estimates(&a.out, &estimates)?;
    info!("wrote {} estimates ({failed} failed) to {}", estimates.len(), a.out.display());
    Ok(())
}

fn run_methods(
    estimates: &[LocalEstimate],
    methods: &[MethodTag],
    cfg: &AggregateConfig,
) -> CliResult<Vec<(MethodTag, Matrix, usize)>> {
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let step = if methods.iter().any(|m| m.uses_clustering()) {
        Some(cluster_step(estimates, cfg)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for m in methods {
        let result = match m {
            MethodTag::RfIca | MethodTag::FicaCenters => {
                aggregate(step.clone().expect("clustering step computed"), m, cfg)?
            }
            MethodTag::SimpleMean => simple_aggregate(estimates, SimpleMode::Mean, cfg)?,
            MethodTag::SimpleMedian => simple_aggregate(estimates, SimpleMode::Median, cfg)?,
        };
        out.push((m, result.a_bar, result.benchmark_id));
    }
    Ok(out)
}

fn aggregate_cmd(a: AggregateArgs) -> CliResult<()> {
    let estimates = read_estimates(&a.estimates)?;
    let truth = a.truth.as_deref().map(read_mixing).transpose()?;
    let results = run_methods(&estimates, &a.methods, &a.opts.config())?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    for (method, a_bar, benchmark_id) in results {
        let mut line = serde_json::json!({
            "method": method.as_str(),
            "benchmark_id": benchmark_id,
        });
        if let Some(t) = &truth {
            let (err, _) = signed_perm_distance(&a_bar, t.matrix())?;
            line["frob_error"] = serde_json::json!(err);
        }
        if let Some(dir) = &a.out {
            let path = dir.join(format!("{method}.csv"));
            write_matrix_csv(&path, &a_bar)?;
            line["path"] = serde_json::json!(path);
        }
        println!("{line}");
    }
    Ok(())
}

fn sweep_config(a: &SweepArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.r {
        cfg.r = v;
    }
    if let Some(v) = &a.k {
        cfg.k = v.clone();
    }
    if let Some(v) = a.n_normal {
        cfg.n_normal = v;
    }
    if let Some(v) = &a.corrupt_n {
        cfg.corrupt_n = v.clone();
    }
    if let Some(v) = &a.corrupt_fraction {
        cfg.corrupt_fraction = v.clone();
    }
    if let Some(v) = a.sparsity {
        cfg.sparsity = v;
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.kmeans_restarts {
        cfg.kmeans_restarts = v;
    }
    if let Some(v) = &a.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = a.init_mode {
        cfg.init_mode = match v {
            InitStudyArg::RandomOrthogonal => InitStudy::RandomOrthogonal,
            InitStudyArg::Shared => InitStudy::Shared,
        };
    }
    if let Some(v) = a.base_seed {
        cfg.base_seed = v;
    }
    if let Some(v) = &a.output_path {
        cfg.output_path = v.clone();
    }
    if let Some(v) = a.sweep_mode {
        cfg.sweep_mode = match v {
            SweepModeArg::Panels => SweepMode::Panels,
            SweepModeArg::Grid => SweepMode::Grid,
        };
    }
    if let Some(v) = a.benchmark {
        cfg.benchmark = match v {
            BenchmarkArg::LargestN => BenchmarkChoice::LargestN,
            BenchmarkArg::BestKmeansLoss => BenchmarkChoice::BestKmeansLoss,
        };
    }
    if a.no_diagnostics {
        cfg.diagnostics = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(a: SweepArgs) -> CliResult<ExitCode> {
    let cfg = sweep_config(&a)?;
    let result = run_sweep(&cfg)?;
    let written = write_sweep(&result, &cfg.output_path)?;
    fs::write(cfg.output_path.join("config.toml"), cfg.to_toml_string())
        .map_err(|e| format!("{}: {e}", cfg.output_path.display()))?;
    for path in &written {
        info!("wrote {}", path.display());
    }
    if result.has_failures() {
        eprintln!("sweep finished with {} failed rows:", result.failures.len());
        for f in &result.failures {
            eprintln!("  {f}");
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn check(a: CheckArgs) -> CliResult<()> {
    let a_star = read_mixing(&a.scenario)?.into_matrix();
    let estimates = read_estimates(&a.estimates)?;
    let cfg = a.opts.config();
    let rf = aggregate(cluster_step(&estimates, &cfg)?, MethodTag::RfIca, &cfg)?;
    let (frob_error, _) = signed_perm_distance(&rf.a_bar, &a_star)?;
    let report = theory_report(&estimates, &rf, &a_star)?;
    let json = serde_json::json!({
        "frob_error": frob_error,
        "all_pass_with_hypotheses": report.all_pass_with_hypotheses(),
        "report": report,
    });
    let text = serde_json::to_string_pretty(&json)?;
    write_or_print(a.out.as_deref(), &text)
}

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()).into()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
