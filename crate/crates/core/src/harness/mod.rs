//! Experiment plumbing: configs, deterministic runs, trace files and reports.

pub mod compare;
pub mod config;
pub mod report;
pub mod run;
pub mod tracefile;

pub use compare::{compare_dir, CompareTable, DEFAULT_TARGETS};
pub use config::{parse_config, ExperimentConfig, OUTPUT_DIR_ENV};
pub use report::{bounds_report, consensus_demo, DemoParams};
pub use run::{run_experiment, run_experiment_to, ExperimentResult, RunOutcome};
pub use tracefile::{read_trace_csv, write_trace_csv, TRACE_HEADER};
