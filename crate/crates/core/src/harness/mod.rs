//! Experiment runner: configuration, presets, the outer training loops,
//! evaluation, metrics and checkpoints.
//!
//! A run directory holds `config.json` (the resolved configuration),
//! `metrics.csv` (one [`MetricsRow`] per evaluation period), `policy.ckpt`
//! and, for model-based algorithms, `model.ckpt`. A run that diverged also
//! holds a `DIVERGED` file with the reason.

mod audit;
mod config;
mod eval;
mod metrics;
mod presets;
mod run;

pub use audit::{audit_policy, gradient_audit, AuditLine, AuditReport};
pub use config::{
    EvalConfig, ExperimentConfig, ModelConfig, OptimizerConfig, PolicyConfig, ReplayConfig, UpdateSchedule,
    ValueConfig,
};
pub use eval::{evaluate_policy, EvalResult};
pub use metrics::{read_metrics, write_metrics, MetricsRow, MetricsWriter, METRICS_COLUMNS};
pub use presets::{preset, suite, PRESETS, SUITES};
pub use run::{
    output_root, run_experiment, run_experiment_with, NoObserver, Phase, RunOutcome, RunStatus, TrainingObserver,
    OUTPUT_ROOT_ENV,
};
