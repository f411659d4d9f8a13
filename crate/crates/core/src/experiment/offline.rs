//! Attack over exported snapshots: labeled shadow models and one target,
//! read from `.fsnp` (full weights) or `.fsum` (per-tensor statistics).

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::FeatureModeTag;
use super::ExperimentError;
use crate::centroid::CentroidModel;
use crate::features::{extract_features, features_from_summary, FeatureMode, FeatureVector, LayerSelector};
use crate::format::{load_snapshot, load_summary};
use crate::snapshot::WeightSnapshot;

#[derive(Clone, Debug)]
pub struct OfflineAttack {
    /// Baseline for delta features; optional in raw mode.
    pub global: Option<PathBuf>,
    /// Directory that relative paths in the labels file resolve against.
    pub shadow_dir: PathBuf,
    /// `path,label` rows, with an optional header line.
    pub labels: PathBuf,
    pub target: PathBuf,
    pub mode: FeatureModeTag,
    pub selector: LayerSelector,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OfflineVerdict {
    pub target: String,
    pub predicted: String,
    pub classes: Vec<String>,
    pub shadow_counts: Vec<usize>,
    pub distances: Vec<f64>,
    pub feature_dim: usize,
}

/// Parses `path,label` lines. A first line of exactly `path,label` is a
/// header; blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<(String, String)>, ExperimentError> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line == "path,label") {
            continue;
        }
        let Some((path, label)) = line.split_once(',') else {
            return Err(ExperimentError::Config(format!(
                "labels line {}: expected `path,label`",
                n + 1
            )));
        };
        let (path, label) = (path.trim(), label.trim());
        if path.is_empty() || label.is_empty() {
            return Err(ExperimentError::Config(format!(
                "labels line {}: empty path or label",
                n + 1
            )));
        }
        rows.push((path.to_string(), label.to_string()));
    }
    if rows.is_empty() {
        return Err(ExperimentError::Config("labels file lists no shadow models".into()));
    }
    Ok(rows)
}

fn is_summary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "fsum")
}

fn features_of(
    path: &Path,
    global: Option<&WeightSnapshot>,
    mode: FeatureModeTag,
    selector: &LayerSelector,
) -> Result<FeatureVector, ExperimentError> {
    if is_summary(path) {
        if mode == FeatureModeTag::Delta {
            return Err(ExperimentError::Config(format!(
                "{}: summaries carry no weights, delta features need a .fsnp",
                path.display()
            )));
        }
        return Ok(features_from_summary(&load_summary(path)?, selector)?);
    }
    let snap = load_snapshot(path)?;
    let fm = match (mode, global) {
        (FeatureModeTag::RawWeights, _) => FeatureMode::RawWeights,
        (FeatureModeTag::Delta, Some(g)) => FeatureMode::Delta(g),
        (FeatureModeTag::Delta, None) => {
            return Err(ExperimentError::Config("delta features need --global".into()))
        }
    };
    Ok(extract_features(&snap, selector, fm)?)
}

pub fn run_offline_attack(a: &OfflineAttack) -> Result<OfflineVerdict, ExperimentError> {
    let text = std::fs::read_to_string(&a.labels)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", a.labels.display())))?;
    let rows = parse_labels(&text)?;
    let global = match &a.global {
        Some(p) => Some(load_snapshot(p)?),
        None => None,
    };
    let mut train = Vec::with_capacity(rows.len());
    for (path, label) in rows {
        let p = a.shadow_dir.join(path);
        let z = features_of(&p, global.as_ref(), a.mode, &a.selector)?;
        train.push((z, label));
    }
    let model = CentroidModel::fit(&train)?;
    let z = features_of(&a.target, global.as_ref(), a.mode, &a.selector)?;
    let p = model.predict(&z)?;
    Ok(OfflineVerdict {
        target: a.target.display().to_string(),
        predicted: p.label,
        classes: model.classes().to_vec(),
        shadow_counts: model.counts().to_vec(),
        distances: p.distances,
        feature_dim: model.dim(),
    })
}
