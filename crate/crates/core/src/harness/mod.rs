//! Experiment configuration, sweeps and CSV output.

pub mod config;
pub mod experiments;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind, Family, Method, PlanChoice};
pub use experiments::{
    minimal_n, run_experiment, run_phase_transition, run_sampling_vs_counting, run_success_curve, run_trials,
    TrialSummary,
};
pub use table::{emit_csv, Table, WALLCLOCK_COLUMN};

/// Runs the experiment and writes its CSV to `cfg.output` when set.
pub fn run_and_emit(cfg: &ExperimentConfig) -> crate::Result<Table> {
    let table = run_experiment(cfg)?;
    if let Some(path) = &cfg.output {
        emit_csv(&table, path)?;
    }
    Ok(table)
}
