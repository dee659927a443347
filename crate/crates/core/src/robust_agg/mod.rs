//! Robust aggregation: pinball-loss quantiles, the geometric median and the
//! RF-ICA pipeline with its baselines.

mod aggregate;
mod geomedian;
mod quantile;

pub use aggregate::{
    aggregate, cluster_step, fica_centers, rf_ica, simple_aggregate, AggregateConfig,
    AggregationResult, ClusterStep, MethodTag, SimpleMode,
};
pub use geomedian::{
    geometric_median, geometric_median_with, gm_objective, GMResult, GM_COINCIDENCE_TOL,
    GM_DEFAULT_MAX_ITERS, GM_DEFAULT_TOL,
};
pub use quantile::{
    approx_gm_error_bound, gm_error_bound, pinball_objective, sample_quantile,
};
