//! Config-driven experiment harness: trials, sweeps and file formats.

mod config;
pub mod io;
mod trial;

pub use config::{Axis, Cell, ExperimentConfig, InitStudy, MethodSpec, SweepMode};
pub use trial::{mean_stderr, run_sweep, run_trial, solve_all, CellSummary, PlotPoint, SweepResult, TrialResult};
