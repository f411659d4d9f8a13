//! Accuracy, per-class precision / recall / F1, and confusion matrices.
//!
//! Confusion matrices are indexed `[true class][predicted class]`.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::centroid::CentroidModel;
use crate::features::FeatureVector;

pub type Confusion = Vec<Vec<usize>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of test samples whose true class is this one.
    pub support: usize,
    /// Predicted count was 0; precision reported as 0.
    pub precision_undefined: bool,
    /// Support was 0; recall reported as 0.
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub per_class: Vec<ClassMetrics>,
}

pub fn accuracy(confusion: &Confusion) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    trace as f64 / total as f64
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn class_metrics(confusion: &Confusion, classes: &[String]) -> Vec<ClassMetrics> {
    let k = confusion.len();
    (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: classes[c].clone(),
                precision,
                recall,
                f1,
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect()
}

impl FoldResult {
    pub fn from_confusion(confusion: Confusion, classes: &[String]) -> Result<Self, EvalError> {
        if confusion.iter().flatten().sum::<usize>() == 0 {
            return Err(EvalError::EmptyTestSet);
        }
        Ok(Self {
            accuracy: accuracy(&confusion),
            per_class: class_metrics(&confusion, classes),
            confusion,
        })
    }
}

/// Classifies every test vector and tallies the confusion matrix over the
/// model's classes.
pub fn evaluate_fold(
    model: &CentroidModel,
    test: &[(FeatureVector, String)],
) -> Result<FoldResult, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let k = model.classes().len();
    let truth = test
        .iter()
        .map(|(_, label)| {
            model
                .class_index(label)
                .ok_or_else(|| EvalError::UnknownClass(label.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let queries: Vec<FeatureVector> = test.iter().map(|(fv, _)| fv.clone()).collect();
    let preds = model.predict_batch(&queries)?;
    let mut confusion = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(&preds) {
        confusion[*t][p.class_index] += 1;
    }
    FoldResult::from_confusion(confusion, model.classes())
}

/// Element-wise sum of equally sized confusion matrices.
pub fn pool_confusions<'a>(mats: impl IntoIterator<Item = &'a Confusion>) -> Confusion {
    let mut out: Confusion = Vec::new();
    for m in mats {
        if out.is_empty() {
            out = vec![vec![0; m.len()]; m.len()];
        }
        for (orow, mrow) in out.iter_mut().zip(m) {
            for (o, v) in orow.iter_mut().zip(mrow) {
                *o += v;
            }
        }
    }
    out
}

/// Each column (predicted class) divided by its sum, so the diagonal holds
/// per-class precision. Empty columns stay zero.
pub fn confusion_proportions(confusion: &Confusion) -> Vec<Vec<f64>> {
    let k = confusion.len();
    let col_sums: Vec<usize> = (0..k).map(|c| (0..k).map(|r| confusion[r][c]).sum()).collect();
    confusion
        .iter()
        .map(|row| {
            row.iter()
                .zip(&col_sums)
                .map(|(&v, &s)| if s == 0 { 0.0 } else { v as f64 / s as f64 })
                .collect()
        })
        .collect()
}
