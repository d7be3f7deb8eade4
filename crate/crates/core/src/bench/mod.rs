//! Run configuration, experiment driver and metrics.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{Ablation, ConfigError, OracleSpec, RunConfig};
pub use experiment::{
    build_oracle, explore, fresh_state, infer, run_bench, run_full, run_memoryless, run_rounds, BenchReport, ExperimentError,
    LoadedWorld, RunManifest, RunOutput, Thresholds, Variant, FULL, VARIANTS,
};
pub use metrics::{
    compare_runs, percent, read_results, reduction_pct, write_results, Breakdown, CompareError, Comparison,
    MetricsReport, ResultsError,
};
