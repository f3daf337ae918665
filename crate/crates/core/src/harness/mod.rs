//! Experiment orchestration: configs, the training loop, sweeps and reports.

mod config;
mod report;
mod runner;
mod sweep;

pub use config::{
    load_base_dataset, AccuracyMode, DataSource, ExperimentConfig, Intervention, NetworkSpec,
    OptimizerSpec, SnrSettings, TaskSpec,
};
pub use report::{
    last_fraction_accuracy, read_metrics, report, summarize, MetricsFile, ReportRow, TAIL_FRACTION,
};
pub use runner::{
    dead_window_steps, run_experiment, run_with_data, MetricsRecord, RunOptions, RunOutcome,
};
pub use sweep::{aggregate, apply_override, sweep, SweepAxis, SweepCell, SweepRow, SweepSpec};
