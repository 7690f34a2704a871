//! Configuration loading, single runs, sweeps and property suites.

mod manifest;
mod run;
mod sweep;
pub mod verify;

pub use manifest::{canonical_hash, config_hash, load_config, parse_config, RunManifest, TOOL_VERSION};
pub use run::{
    evaluate, generate_data, load_state, round_log_line, run_id, train_run, with_threads, Evaluation, MetricsRow, RunOutcome,
    EVAL_FILE, METRICS_FILE, METRICS_HEADER, NOT_APPLICABLE, ROUND_LOG_FILE, STATE_FILE,
};
pub use sweep::{
    load_sweep_config, mean_std, run_sweep, CellSummary, SweepConfig, SweepOutcome, DEFAULT_SEEDS, RUNS_FILE,
    SUMMARY_FILE, SUMMARY_HEADER,
};
pub use verify::{resolve_selector, run_suites, SuiteReport, SUITES};
