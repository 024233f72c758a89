//! Baselines, metrics, experiment orchestration and CSV reports.

mod baseline;
mod experiment;
mod metrics;
mod report;

pub use baseline::greedy_baseline;
pub use experiment::{run_experiment, scale_config, ExperimentOutput, MetricsReport, Mode};
pub use metrics::{
    benchmark_spec, compute_regret, compute_revenue, expected_revenue, preference_error, realized_benchmark,
    regret_constant, solve_benchmark,
};
pub use report::{emit_report, TIMING_FILE};
