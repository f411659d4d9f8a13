//! Scenario-driven attack experiments and their reports.

pub mod config;
pub mod offline;
pub mod report;
pub mod runner;

use thiserror::Error;

pub use config::{DefenseConfig, FeatureModeTag, PretrainConfig, ScenarioConfig};
pub use report::{
    emit_report, report_from_json, report_to_json, DefenseOutcome, ReportDocument, ReportFormat,
    ReportKind,
};
pub use runner::{
    run_binary_scenario, run_defense_experiment, run_layer_sweep, run_multiclass_scenario,
    run_scenario, run_unseen_class_experiment, RunOptions,
};

use crate::centroid::ClassifierError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::sim::SimError;
use crate::snapshot::SnapshotError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("unknown report format `{0}` (expected json or csv)")]
    UnknownFormat(String),
    #[error("io failure: {0}")]
    Io(String),
    #[error("cannot parse report: {0}")]
    Parse(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

impl ExperimentError {
    /// True for problems with the inputs rather than with the run itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_) | ExperimentError::UnknownFormat(_)
        )
    }
}
