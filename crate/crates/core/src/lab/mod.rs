//! Experiment orchestration: configs, dispatch, run records and plots.

mod check;
mod config;
mod plots;
mod record;
mod run;

pub use check::{run_check, SUITES};
pub use config::{
    CheckConfig, ControlConfig, DeloneConfig, ErgodicConfig, ExperimentConfig, RandomDeloneConfig,
    Tolerances,
};
pub use plots::{emit_plots, heatmap_svg, line_svg, LinePlot, Series};
pub use record::{content_hash, RunRecord, Timing, VerdictLine};
pub use run::{exit_code, resolve, resolve_threads, run, RunOptions, Subcommand, THREADS_ENV};
