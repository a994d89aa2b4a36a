//! Experiment harness: configs, sweeps, run logs, post-hoc analyses and
//! aggregate reports.

mod analyze;
mod config;
mod report;
mod run;
mod runlog;

pub use analyze::{
    analyze_checkpoint, analyze_run, AnalysisKind, AnalysisOutput, PerturbationRecord, RankRecord,
    SpectrumRecord, TheoremRecord,
};
pub use config::{
    AnalysisToggles, CellSpec, ExperimentConfig, ModelSpec, SequenceSpec, OUTPUT_ROOT_ENV,
    PAPER_LR_GRID, PAPER_SEEDS, SCHEMA_VERSION,
};
pub use report::{report, trend, DistanceAggregate, Report, ReportRow, TrendRow};
pub use run::{
    load_cell, run_cell, run_cell_on, run_experiment, sweep, CellStatus, Manifest,
    ManifestEntry,
};
pub use runlog::{
    decode_checkpoint, encode_checkpoint, load_run, read_checkpoint, save_run, write_checkpoint,
    MetricsRow, RunAbort, RunLog, CHECKPOINT_MAGIC,
};
