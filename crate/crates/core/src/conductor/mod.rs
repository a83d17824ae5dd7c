//! Experiment orchestration: configs and profiles, single experiments,
//! severity sweeps, persistence and table rendering.

pub mod config;
pub mod experiment;
pub mod launch;
pub mod render;
pub mod sweep;

pub use config::{default_levels, BenchType, ExperimentConfig, LauncherKind, Profile, RmitSettings, TrimSettings};
pub use experiment::{
    load_results, load_results_checked, persist_results, reanalyze, run_experiment, ExperimentError, ExperimentResult,
    PersistError, RawData,
};
pub use render::{render_detection_table, render_rciw_summary, summarize_rciw};
pub use sweep::{run_severity_sweep, SweepOutcome};
