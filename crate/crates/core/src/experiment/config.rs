use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::BenchmarkChoice;
use crate::model_gen::ExperimentScenario;
use crate::robust_agg::MethodTag;
use crate::{Error, Result};

/// Initialization regime of the local solvers in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStudy {
    /// Independent random orthogonal start per client.
    #[default]
    RandomOrthogonal,
    /// Every method runs twice: on random starts and on one start shared by
    /// all clients (the latter tagged `_ini`).
    Shared,
}

/// How the varied axes combine into cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// One panel per axis, the other axes held at their defaults.
    #[default]
    Panels,
    /// Full Cartesian product.
    Grid,
}

/// A method as it appears in the output: the aggregation rule plus the
/// initialization regime of the estimates it consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodSpec {
    pub tag: MethodTag,
    pub shared_init: bool,
}

impl MethodSpec {
    pub fn label(self) -> String {
        if self.shared_init {
            format!("{}_ini", self.tag)
        } else {
            self.tag.to_string()
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_suffix("_ini") {
            Some(base) => Ok(Self { tag: base.parse()?, shared_init: true }),
            None => Ok(Self { tag: s.parse()?, shared_init: false }),
        }
    }
}

fn default_r() -> usize {
    10
}
fn default_k_list() -> Vec<usize> {
    vec![30]
}
fn default_n_normal() -> usize {
    5000
}
fn default_corrupt_n_list() -> Vec<usize> {
    vec![300]
}
fn default_fraction_list() -> Vec<f64> {
    vec![0.1]
}
fn default_sparsity() -> f64 {
    0.1
}
fn default_trials() -> usize {
    20
}
fn default_restarts() -> usize {
    10
}
fn default_methods() -> Vec<MethodTag> {
    MethodTag::ALL.to_vec()
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_k() -> usize {
    30
}
fn default_corrupt_n() -> usize {
    300
}
fn default_fraction() -> f64 {
    0.1
}
fn default_max_iters() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}

/// One sweep, read from a TOML file.
///
/// ```toml
/// r = 10
/// K = [10, 30, 50, 70, 100]
/// n_normal = 5000
/// corrupt_n = [50, 70, 100, 300, 500, 1000]
/// corrupt_fraction = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4]
/// sparsity = 0.1
/// trials = 20
/// kmeans_restarts = 10
/// methods = ["rf_ica", "fica_centers", "simple_mean", "simple_median"]
/// init_mode = "random_orthogonal"
/// base_seed = 0
/// output_path = "results/panels"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(rename = "K", default = "default_k_list")]
    pub k: Vec<usize>,
    #[serde(default = "default_n_normal")]
    pub n_normal: usize,
    #[serde(default = "default_corrupt_n_list")]
    pub corrupt_n: Vec<usize>,
    #[serde(default = "default_fraction_list")]
    pub corrupt_fraction: Vec<f64>,
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodTag>,
    #[serde(default)]
    pub init_mode: InitStudy,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    #[serde(default)]
    pub sweep_mode: SweepMode,
    /// Values held fixed on the axes a panel does not vary.
    #[serde(rename = "default_K", default = "default_k")]
    pub default_k: usize,
    #[serde(default = "default_corrupt_n")]
    pub default_corrupt_n: usize,
    #[serde(default = "default_fraction")]
    pub default_corrupt_fraction: f64,
    #[serde(default)]
    pub benchmark: BenchmarkChoice,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Fill the ground-truth diagnostic columns.
    #[serde(default = "default_true")]
    pub diagnostics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all keys have defaults")
    }
}

/// Axis a panel varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    K,
    CorruptN,
    CorruptFraction,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::K, Axis::CorruptN, Axis::CorruptFraction];

    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "K",
            Axis::CorruptN => "corrupt_n",
            Axis::CorruptFraction => "corrupt_fraction",
        }
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub k: usize,
    pub corrupt_n: usize,
    pub corrupt_fraction: f64,
}

impl Cell {
    /// Stable identifier used in seed derivation.
    pub fn hash(&self) -> u64 {
        crate::seed::mix_all(
            0x5EED_CE11,
            &[self.k as u64, self.corrupt_n as u64, self.corrupt_fraction.to_bits()],
        )
    }

    pub fn axis_value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::K => self.k as f64,
            Axis::CorruptN => self.corrupt_n as f64,
            Axis::CorruptFraction => self.corrupt_fraction,
        }
    }

    fn key(&self) -> (usize, usize, u64) {
        (self.k, self.corrupt_n, self.corrupt_fraction.to_bits())
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.k.is_empty() || self.corrupt_n.is_empty() || self.corrupt_fraction.is_empty() {
            return bad("K, corrupt_n and corrupt_fraction must be non-empty");
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty");
        }
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be >= 1");
        }
        for cell in self.cells() {
            self.scenario(&cell, 0).validate()?;
        }
        Ok(())
    }

    /// Method columns of the output, in row order within a trial.
    pub fn method_specs(&self) -> Vec<MethodSpec> {
        let mut tags = self.methods.clone();
        tags.sort();
        tags.dedup();
        let inits: &[bool] = match self.init_mode {
            InitStudy::RandomOrthogonal => &[false],
            InitStudy::Shared => &[false, true],
        };
        let mut specs: Vec<MethodSpec> = tags
            .into_iter()
            .flat_map(|tag| inits.iter().map(move |&shared_init| MethodSpec { tag, shared_init }))
            .collect();
        specs.sort();
        specs
    }

    /// Panel axes in panels mode: every axis, each with its own list.
    pub fn panels(&self) -> Vec<(Axis, Vec<Cell>)> {
        let base = Cell {
            k: self.default_k,
            corrupt_n: self.default_corrupt_n,
            corrupt_fraction: self.default_corrupt_fraction,
        };
        Axis::ALL
            .iter()
            .map(|&axis| {
                let cells = match axis {
                    Axis::K => self.k.iter().map(|&k| Cell { k, ..base }).collect(),
                    Axis::CorruptN => self.corrupt_n.iter().map(|&corrupt_n| Cell { corrupt_n, ..base }).collect(),
                    Axis::CorruptFraction => self
                        .corrupt_fraction
                        .iter()
                        .map(|&corrupt_fraction| Cell { corrupt_fraction, ..base })
                        .collect(),
                };
                (axis, cells)
            })
            .collect()
    }

    /// Distinct cells to run, in a fixed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = match self.sweep_mode {
            SweepMode::Panels => self.panels().into_iter().flat_map(|(_, c)| c).collect(),
            SweepMode::Grid => self
                .k
                .iter()
                .flat_map(|&k| {
                    self.corrupt_n.iter().flat_map(move |&corrupt_n| {
                        self.corrupt_fraction.iter().map(move |&corrupt_fraction| Cell {
                            k,
                            corrupt_n,
                            corrupt_fraction,
                        })
                    })
                })
                .collect(),
        };
        cells.sort_by(|a, b| {
            (a.k, a.corrupt_n)
                .cmp(&(b.k, b.corrupt_n))
                .then(a.corrupt_fraction.total_cmp(&b.corrupt_fraction))
        });
        cells.dedup_by_key(|c| c.key());
        cells
    }

    /// Per-trial seed: `mix(base_seed, cell hash, trial)`.
    pub fn trial_seed(&self, cell: &Cell, trial: usize) -> u64 {
        crate::seed::mix_all(self.base_seed, &[cell.hash(), trial as u64])
    }

    pub fn scenario(&self, cell: &Cell, trial: usize) -> ExperimentScenario {
        ExperimentScenario {
            r: self.r,
            k: cell.k,
            n_normal: self.n_normal,
            n_corrupt: cell.corrupt_n,
            corrupt_fraction: cell.corrupt_fraction,
            sparsity: self.sparsity,
            seed: self.trial_seed(cell, trial),
        }
    }
}
