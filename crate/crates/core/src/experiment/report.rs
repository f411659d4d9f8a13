//! Report documents and their JSON / CSV renderings.
//!
//! CSV files written for a report at `<dir>/<stem>.csv`:
//!
//! | file                               | header                                                        |
//! |------------------------------------|---------------------------------------------------------------|
//! | `<stem>.csv`                       | `class,precision,recall,f1,support`                           |
//! | `<stem>.folds.csv`                 | `fold,n_train,n_test,accuracy`                                |
//! | `<stem>.confusion_counts.csv`      | `true\predicted,<class>...`                                   |
//! | `<stem>.confusion_proportions.csv` | `true\predicted,<class>...` (columns sum to 1)                |
//! | `<stem>.layers.csv` (sweeps)       | `selector,dim,mean,standard_error,ci_low,ci_high`             |
//!
//! Reals are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::ExperimentError;
use crate::eval::{ClassMetrics, Confusion, FoldResult, IntervalSummary, SampleRole};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Binary,
    Multiclass,
    LayerSweep,
    Defense,
    Unseen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub sample: usize,
    pub speaker_id: String,
    pub speaker_seed: u64,
    pub utterance: usize,
    pub class: String,
    pub role: SampleRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Predicted class label for each entry of `test`.
    pub predicted: Vec<String>,
    pub result: FoldResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub selector: String,
    pub dim: usize,
    pub fold_accuracies: Vec<f64>,
    pub summary: IntervalSummary,
    /// The all-tensor row that the per-layer rows are compared against.
    pub baseline: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationCounts {
    pub pretrain_steps: usize,
    pub finetunes: usize,
    pub finetune_steps: usize,
    pub utterances_synthesized: usize,
    pub predictions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseBlock {
    pub phase: String,
    pub samples_per_class: Vec<usize>,
    pub defense_speakers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnseenBlock {
    pub values: Vec<usize>,
    pub shadows_per_class: usize,
    pub tests_per_class: usize,
    pub defended_global: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: u32,
    pub kind: ReportKind,
    pub scenario: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unseen: Option<UnseenBlock>,
    pub classes: Vec<String>,
    /// Classes with shadow samples but no test samples.
    pub train_only_classes: Vec<String>,
    pub feature_dim: usize,
    pub roster: Vec<RosterEntry>,
    pub folds: Vec<FoldRecord>,
    pub accuracy: IntervalSummary,
    /// Confusion counts pooled over folds, `[true][predicted]`.
    pub confusion: Confusion,
    pub confusion_proportions: Vec<Vec<f64>>,
    /// Per-class metrics from the pooled confusion.
    pub per_class: Vec<ClassMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerRow>,
    pub warnings: Vec<String>,
    pub operations: OperationCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: String,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub before: ReportDocument,
    pub after: ReportDocument,
    pub mean_accuracy_delta: f64,
    pub per_class: Vec<ClassDelta>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(ExperimentError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn report_to_json(r: &ReportDocument) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<ReportDocument, ExperimentError> {
    serde_json::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn metrics_csv(r: &ReportDocument) -> String {
    let mut out = String::from("class,precision,recall,f1,support\n");
    for m in &r.per_class {
        writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&m.class),
            real(m.precision),
            real(m.recall),
            real(m.f1),
            m.support
        )
        .unwrap();
    }
    out
}

pub fn folds_csv(r: &ReportDocument) -> String {
    let mut out = String::from("fold,n_train,n_test,accuracy\n");
    for f in &r.folds {
        writeln!(
            out,
            "{},{},{},{}",
            f.fold,
            f.train.len(),
            f.test.len(),
            real(f.result.accuracy)
        )
        .unwrap();
    }
    out
}

fn matrix_csv<T>(classes: &[String], rows: &[Vec<T>], fmt: impl Fn(&T) -> String) -> String {
    let mut out = String::from("true\\predicted");
    for c in classes {
        out.push(',');
        out.push_str(&csv_field(c));
    }
    out.push('\n');
    for (c, row) in classes.iter().zip(rows) {
        out.push_str(&csv_field(c));
        for v in row {
            out.push(',');
            out.push_str(&fmt(v));
        }
        out.push('\n');
    }
    out
}

pub fn confusion_counts_csv(r: &ReportDocument) -> String {
    matrix_csv(&r.classes, &r.confusion, |v| v.to_string())
}

pub fn confusion_proportions_csv(r: &ReportDocument) -> String {
    matrix_csv(&r.classes, &r.confusion_proportions, |v| real(*v))
}

pub fn layers_csv(r: &ReportDocument) -> String {
    let mut out = String::from("selector,dim,mean,standard_error,ci_low,ci_high\n");
    for l in &r.layers {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&l.selector),
            l.dim,
            real(l.summary.mean),
            real(l.summary.standard_error),
            real(l.summary.ci_low),
            real(l.summary.ci_high)
        )
        .unwrap();
    }
    out
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes `r` to `path`. JSON is a single document; CSV writes the metrics
/// table to `path` and the other tables next to it (see module docs).
/// Returns every file written.
pub fn emit_report(
    r: &ReportDocument,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let path = path.as_ref();
    let files: Vec<(PathBuf, String)> = match format {
        ReportFormat::Json => vec![(path.to_path_buf(), report_to_json(r))],
        ReportFormat::Csv => {
            let mut v = vec![
                (path.to_path_buf(), metrics_csv(r)),
                (sibling(path, ".folds.csv"), folds_csv(r)),
                (sibling(path, ".confusion_counts.csv"), confusion_counts_csv(r)),
                (
                    sibling(path, ".confusion_proportions.csv"),
                    confusion_proportions_csv(r),
                ),
            ];
            if !r.layers.is_empty() {
                v.push((sibling(path, ".layers.csv"), layers_csv(r)));
            }
            v
        }
    };
    let mut written = Vec::with_capacity(files.len());
    for (p, body) in files {
        fs::write(&p, body).map_err(|e| ExperimentError::Io(format!("{}: {e}", p.display())))?;
        written.push(p);
    }
    Ok(written)
}
