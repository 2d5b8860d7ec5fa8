//! Manifest-driven experiment sweeps.

mod manifest;
mod run;

pub use manifest::{
    DatasetKind, EvalSettings, ExperimentManifest, Hyperparameters, RunPlan, Scenario, DATA_DIR_ENV,
};
pub use run::{
    audit, dry_run, load_dataset, run_sweep, run_sweep_on, RunAudit, RunReport, SweepOptions, SweepReport,
    ERROR_MARKER,
};
