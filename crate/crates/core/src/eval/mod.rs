//! Evaluation protocols for the attack: splits, fold metrics, and interval
//! summaries across folds.

pub mod interval;
pub mod metrics;
pub mod splits;

use thiserror::Error;

pub use interval::{summarize_folds, IntervalSummary};
pub use metrics::{
    confusion_proportions, evaluate_fold, pool_confusions, ClassMetrics, Confusion, FoldResult,
};
pub use splits::{make_splits, SampleMeta, SampleRole, Split, SplitPlan, SplitScheme};

use crate::centroid::ClassifierError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("unknown split scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("no values to summarize")]
    EmptyValues,
    #[error("only the 0.95 level is tabulated, got {0}")]
    UnsupportedLevel(f64),
    #[error("test label `{0}` is not a model class")]
    UnknownClass(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}
