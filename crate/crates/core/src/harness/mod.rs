//! Experiment definition, execution, metrics and reporting.

mod auc;
mod config;
mod outcome;
mod report;
mod run;
mod summary;
mod supervision;
mod sweep;

pub use auc::{compute_auc, curve_auc, service_floor};
pub use config::{Compression, ExperimentConfig};
pub use outcome::{execute, load_runs, write_run, RunOutcome};
pub use report::{emit_report, ReportFormat};
pub use run::{run_experiment, MetricsLog, StepRow, WindowRecord};
pub use summary::{final_level, mean, median, sample_std, summarize, CellSummary, RunSummary, Summary, FLOOR_FROM};
pub use supervision::{grid_partition, SupervisoryGroup};
pub use sweep::{cell_label, expand, linspace, sweep, LambdaAxis, SweepAxes, SweepOutput};
