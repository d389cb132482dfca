//! Experiment configuration, multi-seed orchestration, metrics files and
//! plots.
//!
//! A run directory holds `config.cfg` (the resolved configuration),
//! `seed_<s>.csv` per seed, `aggregate.csv`, `summary.csv` and final
//! checkpoints under `checkpoints/seed_<s>/`.

mod config;
mod plot;
mod run;

pub use config::{parse_config, ExperimentConfig, Sharing};
pub use plot::{emit_plots, load_run, summarize, PlotOutput, RunData, SummaryRow};
pub use run::{
    aggregate, final_window_mean, first_crossing, read_metrics, run_experiment, seed_csv_name,
    train_seed, write_aggregate, write_summary, AggregateRow, MetricsRow, RunSummary, SeedSummary,
    AGGREGATE_CSV, CONFIG_SNAPSHOT, CSV_HEADER, SUMMARY_CSV,
};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "MARL_OUT_DIR";
