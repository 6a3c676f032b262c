//! Experiment runner: TOML configuration, end-to-end pipelines, evaluation
//! against exact distances, and the concentration self-test.
//!
//! A run writes `report.json`, `recovered.csv` (`i,j,distance` over global
//! sample indices), `diagnostics.jsonl`, and optionally `comparator.bin`.
//! Every breach count in the report can be recounted from the diagnostics file.

pub mod config;
pub mod report;
pub mod run;
pub mod selftest;

pub use config::{Algorithm, ExperimentConfig, Limits, MissingRecoveryMode, OutputConfig, Precision, SampleLayout, ThresholdConfig, ThresholdMode};
pub use report::{evaluate, read_recovered_csv, recount_diagnostics, write_recovered_csv, ErrorReport, RunStatus};
pub use run::{build_oracle, execute, run_experiment, RunOutput};
pub use selftest::{concentration_selftest, SelftestConfig, SelftestReport};
