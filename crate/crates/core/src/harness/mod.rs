//! Experiment pipeline: configuration, CSV ingestion, certification of
//! test sets and metric reports.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod metrics;

pub use config::{CsvSchema, Decision, ExperimentConfig, PartitionStrategy, Task, Training};
pub use csvio::{load_csv, write_csv, TargetKind};
pub use experiment::{
    certify_dataset, certify_instance, emit_envelope, run_experiment, CertifyPlan, EvaluationReport,
    InstanceRecord, MethodSummary,
};
pub use metrics::{certified_accuracy, envelope, median_certified_robustness, CurvePoint};
