//! Weight-statistics feature vectors.
//!
//! Each selected parameter tensor contributes four numbers (mean, population
//! standard deviation, min, max), concatenated in canonical tensor order. A
//! model with `k` selected tensors yields a vector of length `4k`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::snapshot::{SnapshotError, SummarySnapshot, TensorRecord, WeightSnapshot};

/// Statistics per tensor.
pub const STATS_PER_TENSOR: usize = 4;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot summarize an empty tensor")]
    EmptyTensor,
    #[error("layer selector matched no tensors")]
    EmptySelection,
    #[error("selector names tensor `{0}` which the snapshot does not contain")]
    UnknownTensor(String),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("feature vectors have different layouts")]
    LayoutMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl TensorStats {
    pub fn to_array(&self) -> [f64; 4] {
        [self.mean, self.std, self.min, self.max]
    }

    pub fn from_array([mean, std, min, max]: [f64; 4]) -> Self {
        Self {
            mean,
            std,
            min,
            max,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn summarize_tensor(p: &TensorRecord) -> Result<TensorStats, FeatureError> {
    summarize_values(&p.values)
}

/// Mean, population standard deviation, min and max of `values`.
///
/// The mean is a compensated sum divided by `n`; the variance is a second
/// compensated pass over deviations from that mean with the usual
/// `(sum d)^2 / n` correction for the residual error in the mean.
pub fn summarize_values(values: &[f64]) -> Result<TensorStats, FeatureError> {
    let n = values.len();
    if n == 0 {
        return Err(FeatureError::EmptyTensor);
    }
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut sum = CompensatedSum::default();
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum.add(v);
    }
    if min == max {
        return Ok(TensorStats {
            mean: min,
            std: 0.0,
            min,
            max,
        });
    }
    let nf = n as f64;
    let mean = (sum.value() / nf).clamp(min, max);

    let mut dev = CompensatedSum::default();
    let mut sq = CompensatedSum::default();
    for &v in values {
        let d = v - mean;
        dev.add(d);
        sq.add(d * d);
    }
    let d = dev.value();
    let var = ((sq.value() - d * d / nf) / nf).max(0.0);
    Ok(TensorStats {
        mean,
        std: var.sqrt(),
        min,
        max,
    })
}

/// Which tensors contribute to the feature vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    #[default]
    All,
    NamePrefix(String),
    NameList(Vec<String>),
}

impl LayerSelector {
    /// Indices into `names` (canonical order) of the selected tensors.
    pub fn select<'a, I>(&self, names: I) -> Result<Vec<usize>, FeatureError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let names: Vec<&str> = names.into_iter().collect();
        let picked: Vec<usize> = match self {
            LayerSelector::All => (0..names.len()).collect(),
            LayerSelector::NamePrefix(prefix) => names
                .iter()
                .enumerate()
                .filter(|(_, n)| n.starts_with(prefix.as_str()))
                .map(|(i, _)| i)
                .collect(),
            LayerSelector::NameList(list) => {
                if let Some(missing) = list.iter().find(|l| !names.contains(&l.as_str())) {
                    return Err(FeatureError::UnknownTensor(missing.clone()));
                }
                names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| list.iter().any(|l| l == *n))
                    .map(|(i, _)| i)
                    .collect()
            }
        };
        if picked.is_empty() {
            return Err(FeatureError::EmptySelection);
        }
        Ok(picked)
    }

    pub fn label(&self) -> String {
        match self {
            LayerSelector::All => "all".to_string(),
            LayerSelector::NamePrefix(p) => format!("prefix:{p}"),
            LayerSelector::NameList(l) => format!("list:{}", l.join("+")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum FeatureMode<'a> {
    RawWeights,
    /// Statistics of `s - baseline`, element-wise.
    Delta(&'a WeightSnapshot),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// (tensor name, offset of its 4-block)
    pub layout: Vec<(String, usize)>,
}

impl FeatureVector {
    /// A vector without tensor provenance, used for hand-built inputs.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            layout: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn from_stats<'a>(blocks: impl Iterator<Item = (&'a str, TensorStats)>) -> Self {
        let mut values = Vec::new();
        let mut layout = Vec::new();
        for (name, st) in blocks {
            layout.push((name.to_string(), values.len()));
            values.extend_from_slice(&st.to_array());
        }
        Self { values, layout }
    }
}

pub fn feature_dim(s: &WeightSnapshot, sel: &LayerSelector) -> Result<usize, FeatureError> {
    Ok(STATS_PER_TENSOR * sel.select(s.names())?.len())
}

pub fn extract_features(
    s: &WeightSnapshot,
    sel: &LayerSelector,
    mode: FeatureMode<'_>,
) -> Result<FeatureVector, FeatureError> {
    let picked = sel.select(s.names())?;
    let blocks = match mode {
        FeatureMode::RawWeights => picked
            .iter()
            .map(|&i| {
                let t = &s.tensors[i];
                Ok((t.name.as_str(), summarize_values(&t.values)?))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?,
        FeatureMode::Delta(baseline) => {
            s.check_same_architecture(baseline)?;
            picked
                .iter()
                .map(|&i| {
                    let (t, g) = (&s.tensors[i], &baseline.tensors[i]);
                    let diff: Vec<f64> =
                        t.values.iter().zip(&g.values).map(|(a, b)| a - b).collect();
                    Ok((t.name.as_str(), summarize_values(&diff)?))
                })
                .collect::<Result<Vec<_>, FeatureError>>()?
        }
    };
    Ok(FeatureVector::from_stats(blocks.into_iter()))
}

/// Features of a precomputed summary (raw-weight statistics only).
pub fn features_from_summary(
    s: &SummarySnapshot,
    sel: &LayerSelector,
) -> Result<FeatureVector, FeatureError> {
    let picked = sel.select(s.entries.iter().map(|e| e.name.as_str()))?;
    Ok(FeatureVector::from_stats(
        picked
            .iter()
            .map(|&i| (s.entries[i].name.as_str(), s.entries[i].stats)),
    ))
}

/// CSV with one header line naming every column (`tensor:stat`), then one
/// row per vector. All vectors must share a layout.
pub fn features_to_csv(vectors: &[FeatureVector]) -> Result<String, FeatureError> {
    let mut out = String::new();
    let Some(first) = vectors.first() else {
        return Ok(out);
    };
    if vectors.iter().any(|v| v.layout != first.layout) {
        return Err(FeatureError::LayoutMismatch);
    }
    let header: Vec<String> = first
        .layout
        .iter()
        .flat_map(|(name, _)| {
            ["mean", "std", "min", "max"]
                .iter()
                .map(move |s| format!("{name}:{s}"))
        })
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for v in vectors {
        for (i, x) in v.values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x:.16e}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(name: &str, values: Vec<f64>) -> TensorRecord {
        TensorRecord::new(name, vec![values.len()], values).unwrap()
    }

    #[test]
    fn constant_tensor() {
        let st = summarize_values(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(st.to_array(), [5.0, 0.0, 5.0, 5.0]);
    }

    #[test]
    fn symmetric_pair() {
        let st = summarize_values(&[-1.0, 1.0]).unwrap();
        assert_eq!(st.to_array(), [0.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn one_to_four() {
        // population variance 1.25, std = sqrt(1.25)
        let st = summarize_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(st.mean, 2.5);
        assert!((st.std - 1.118033988749895).abs() < 1e-15);
        assert_eq!((st.min, st.max), (1.0, 4.0));
    }

    #[test]
    fn empty_tensor_is_error() {
        assert!(matches!(
            summarize_values(&[]),
            Err(FeatureError::EmptyTensor)
        ));
    }

    #[test]
    fn small_variance_around_large_offset() {
        let base = 1e8;
        let vals: Vec<f64> = (0..1000).map(|i| base + (i % 2) as f64 * 1e-4).collect();
        let st = summarize_values(&vals).unwrap();
        // the representable gap, halved
        let half_gap = ((base + 1e-4) - base) / 2.0;
        assert!((st.std - half_gap).abs() / half_gap < 1e-12, "{}", st.std);
    }

    fn snap() -> WeightSnapshot {
        WeightSnapshot::new(
            "m",
            vec![
                tensor("enc.1.w", vec![1.0, 2.0, 3.0]),
                tensor("enc.0.w", vec![-1.0, 1.0]),
                tensor("head.b", vec![0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn layout_and_dim() {
        let s = snap();
        let fv = extract_features(&s, &LayerSelector::All, FeatureMode::RawWeights).unwrap();
        assert_eq!(fv.dim(), 12);
        assert_eq!(
            fv.layout,
            vec![
                ("enc.0.w".to_string(), 0),
                ("enc.1.w".to_string(), 4),
                ("head.b".to_string(), 8)
            ]
        );
        assert_eq!(&fv.values[..4], &[0.0, 1.0, -1.0, 1.0]);
        assert_eq!(feature_dim(&s, &LayerSelector::All).unwrap(), 12);
    }

    #[test]
    fn prefix_and_list_selection() {
        let s = snap();
        let sel = LayerSelector::NamePrefix("enc.".into());
        assert_eq!(feature_dim(&s, &sel).unwrap(), 8);
        let sel = LayerSelector::NameList(vec!["head.b".into(), "enc.0.w".into()]);
        let fv = extract_features(&s, &sel, FeatureMode::RawWeights).unwrap();
        // canonical order, not list order
        assert_eq!(fv.layout[0].0, "enc.0.w");
        assert_eq!(fv.layout[1].0, "head.b");
    }

    #[test]
    fn empty_selection_and_unknown_name() {
        let s = snap();
        assert!(matches!(
            feature_dim(&s, &LayerSelector::NamePrefix("dec.".into())),
            Err(FeatureError::EmptySelection)
        ));
        assert!(matches!(
            feature_dim(&s, &LayerSelector::NameList(vec!["nope".into()])),
            Err(FeatureError::UnknownTensor(_))
        ));
        assert!(matches!(
            feature_dim(&s, &LayerSelector::NameList(vec![])),
            Err(FeatureError::EmptySelection)
        ));
    }

    #[test]
    fn delta_of_self_is_zero() {
        let s = snap();
        let fv = extract_features(&s, &LayerSelector::All, FeatureMode::Delta(&s)).unwrap();
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_requires_matching_baseline() {
        let s = snap();
        let other = WeightSnapshot::new("g", vec![tensor("enc.0.w", vec![0.0, 0.0])]).unwrap();
        assert!(matches!(
            extract_features(&s, &LayerSelector::All, FeatureMode::Delta(&other)),
            Err(FeatureError::Snapshot(SnapshotError::ArchitectureMismatch(_)))
        ));
    }

    #[test]
    fn summary_features_match_raw() {
        let s = snap();
        let sum = SummarySnapshot::from_snapshot(&s).unwrap();
        let a = features_from_summary(&sum, &LayerSelector::All).unwrap();
        let b = extract_features(&s, &LayerSelector::All, FeatureMode::RawWeights).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export() {
        let s = snap();
        let fv = extract_features(&s, &LayerSelector::NamePrefix("head".into()), FeatureMode::RawWeights)
            .unwrap();
        let csv = features_to_csv(&[fv.clone(), fv]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "head.b:mean,head.b:std,head.b:min,head.b:max");
        assert_eq!(lines.len(), 3);
        let parsed: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(parsed, vec![0.5, 0.0, 0.5, 0.5]);
    }
}
