//! Monte Carlo experiments: configuration, replication loop, aggregation and
//! comparison with the published tables.

pub mod config;
pub mod report;
pub mod run;
pub mod tables;

pub use config::{
    builtin_config, ExperimentConfig, ExperimentId, Method, OmegaSpec, PriorKind, PriorSpec, Scale, SweepAxis,
    SweepField, SweepPoint, TuningRule,
};
pub use report::{aggregate, emit_report, read_csv, read_json, CsvRow, ExperimentReport, ReportFormat, ReportRow};
pub use run::{fit_dataset, generate_dataset, run_reps, RepFit, RepRecord};

use crate::error::Result;

/// Runs every replication of `cfg` and aggregates the records.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let records = run_reps(cfg, 0..cfg.reps)?;
    aggregate(cfg, &records)
}
