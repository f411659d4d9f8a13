//! Nearest-centroid attribute classifier over weight-statistics features.
//!
//! Distances are Euclidean distances scaled by the product of both vector
//! norms, `||z - c|| / (||z|| * ||c||)`, which is neither cosine distance nor
//! a z-scored distance. The predicted class is the one with the smallest
//! such distance; ties go to the class fitted first.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::features::{FeatureVector, TensorStats, STATS_PER_TENSOR};
use crate::format;
use crate::snapshot::{SnapshotError, SummaryEntry, SummarySnapshot};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class `{0}` has no samples")]
    NoSamplesForClass(String),
    #[error("need at least two classes, found {0}")]
    FewerThanTwoClasses(usize),
    #[error("class labels must be non-empty")]
    EmptyLabel,
    #[error("class `{0}` declared twice")]
    DuplicateClass(String),
    #[error("{0} vector has zero norm")]
    ZeroNormVector(VectorRole),
    #[error("batch item {index}: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<ClassifierError>,
    },
    #[error(transparent)]
    Storage(#[from] SnapshotError),
    #[error("bad centroid manifest: {0}")]
    BadManifest(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VectorRole {
    Query,
    Centroid(String),
}

impl std::fmt::Display for VectorRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorRole::Query => write!(f, "query"),
            VectorRole::Centroid(c) => write!(f, "centroid of class `{c}`"),
        }
    }
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidModel {
    classes: Vec<String>,
    centroids: Vec<Vec<f64>>,
    counts: Vec<usize>,
    dim: usize,
    layout: Vec<(String, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: String,
    /// Index of `label` in the model's class order.
    pub class_index: usize,
    /// Distance to every centroid, in class order.
    pub distances: Vec<f64>,
}

/// Sum by recursive halving; rounding error grows with `log n`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||z - c|| / (||z|| * ||c||)`.
pub fn normalized_distance(z: &FeatureVector, c: &FeatureVector) -> Result<f64> {
    raw_normalized_distance(&z.values, &c.values, || VectorRole::Centroid(String::new()))
}

fn raw_normalized_distance(
    z: &[f64],
    c: &[f64],
    centroid_role: impl FnOnce() -> VectorRole,
) -> Result<f64> {
    if z.len() != c.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: c.len(),
            found: z.len(),
        });
    }
    let nz = norm(z);
    if nz == 0.0 {
        return Err(ClassifierError::ZeroNormVector(VectorRole::Query));
    }
    let nc = norm(c);
    if nc == 0.0 {
        return Err(ClassifierError::ZeroNormVector(centroid_role()));
    }
    let diff = z
        .iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / (nz * nc))
}

impl CentroidModel {
    /// Fits one centroid per label, classes ordered by first appearance.
    pub fn fit(samples: &[(FeatureVector, String)]) -> Result<Self> {
        let mut classes: Vec<String> = Vec::new();
        for (_, label) in samples {
            if !classes.contains(label) {
                classes.push(label.clone());
            }
        }
        Self::fit_with_classes(&classes, samples)
    }

    /// Fits with an explicit class order. Every declared class needs at
    /// least one sample and every sample label must be declared.
    pub fn fit_with_classes(classes: &[String], samples: &[(FeatureVector, String)]) -> Result<Self> {
        if classes.len() < 2 {
            return Err(ClassifierError::FewerThanTwoClasses(classes.len()));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.is_empty() {
                return Err(ClassifierError::EmptyLabel);
            }
            if classes[..i].contains(c) {
                return Err(ClassifierError::DuplicateClass(c.clone()));
            }
        }
        let Some((first, _)) = samples.first() else {
            return Err(ClassifierError::NoSamplesForClass(classes[0].clone()));
        };
        let dim = first.dim();
        let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); classes.len()];
        for (fv, label) in samples {
            if fv.dim() != dim {
                return Err(ClassifierError::DimensionMismatch {
                    expected: dim,
                    found: fv.dim(),
                });
            }
            let k = classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| ClassifierError::NoSamplesForClass(label.clone()))?;
            members[k].push(&fv.values);
        }
        let mut centroids = Vec::with_capacity(classes.len());
        let mut counts = Vec::with_capacity(classes.len());
        let mut column = Vec::new();
        for (k, rows) in members.iter().enumerate() {
            if rows.is_empty() {
                return Err(ClassifierError::NoSamplesForClass(classes[k].clone()));
            }
            let n = rows.len() as f64;
            let centroid = (0..dim)
                .map(|j| {
                    column.clear();
                    column.extend(rows.iter().map(|r| r[j]));
                    pairwise_sum(&column) / n
                })
                .collect();
            centroids.push(centroid);
            counts.push(rows.len());
        }
        Ok(Self {
            classes: classes.to_vec(),
            centroids,
            counts,
            dim,
            layout: first.layout.clone(),
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, class_index: usize) -> FeatureVector {
        FeatureVector {
            values: self.centroids[class_index].clone(),
            layout: self.layout.clone(),
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn predict(&self, z: &FeatureVector) -> Result<Prediction> {
        if z.dim() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: z.dim(),
            });
        }
        let distances = self
            .centroids
            .iter()
            .zip(&self.classes)
            .map(|(c, name)| {
                raw_normalized_distance(&z.values, c, || VectorRole::Centroid(name.clone()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut best = 0;
        for (k, &d) in distances.iter().enumerate().skip(1) {
            if d < distances[best] {
                best = k;
            }
        }
        Ok(Prediction {
            label: self.classes[best].clone(),
            class_index: best,
            distances,
        })
    }

    pub fn predict_batch(&self, zs: &[FeatureVector]) -> Result<Vec<Prediction>> {
        zs.iter()
            .enumerate()
            .map(|(index, z)| {
                self.predict(z).map_err(|e| ClassifierError::BatchItem {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Writes the centroids as a `.fsum` container (one entry per 4-block,
    /// named `c<class index>/<tensor>`) plus a text manifest with class order
    /// and sample counts.
    pub fn save(&self, fsum_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<()> {
        if self.dim % STATS_PER_TENSOR != 0 {
            return Err(ClassifierError::BadManifest(format!(
                "dimension {} is not a multiple of {STATS_PER_TENSOR}",
                self.dim
            )));
        }
        let blocks = self.dim / STATS_PER_TENSOR;
        let block_names: Vec<String> = if self.layout.len() == blocks {
            self.layout.iter().map(|(n, _)| n.clone()).collect()
        } else {
            (0..blocks).map(|b| format!("block{b:06}")).collect()
        };
        let mut entries = Vec::with_capacity(blocks * self.classes.len());
        for (k, c) in self.centroids.iter().enumerate() {
            for (b, name) in block_names.iter().enumerate() {
                let o = b * STATS_PER_TENSOR;
                entries.push(SummaryEntry {
                    name: format!("c{k:05}/{name}"),
                    stats: TensorStats::from_array([c[o], c[o + 1], c[o + 2], c[o + 3]]),
                });
            }
        }
        let sum = SummarySnapshot::new("centroids", entries)?;
        format::save_summary(&sum, fsum_path)?;

        let mut manifest = String::from("# fedleak centroid manifest v1\n");
        writeln!(manifest, "dim\t{}", self.dim).unwrap();
        for (k, (c, n)) in self.classes.iter().zip(&self.counts).enumerate() {
            writeln!(manifest, "class\t{k}\t{n}\t{c}").unwrap();
        }
        fs::write(manifest_path, manifest).map_err(SnapshotError::from)?;
        Ok(())
    }

    pub fn load(fsum_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(SnapshotError::from)?;
        let mut dim = None;
        let mut classes = Vec::new();
        let mut counts = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            match fields.as_slice() {
                ["dim", d] => {
                    dim = Some(d.parse::<usize>().map_err(|e| bad(format!("dim: {e}")))?)
                }
                ["class", k, n, name] => {
                    let k: usize = k.parse().map_err(|e| bad(format!("class index: {e}")))?;
                    if k != classes.len() {
                        return Err(bad(format!("class index {k} out of order")));
                    }
                    counts.push(n.parse().map_err(|e| bad(format!("count: {e}")))?);
                    classes.push(name.to_string());
                }
                _ => return Err(bad(format!("unrecognized line `{line}`"))),
            }
        }
        let dim = dim.ok_or_else(|| bad("missing dim".into()))?;
        if classes.len() < 2 {
            return Err(ClassifierError::FewerThanTwoClasses(classes.len()));
        }
        let sum = format::load_summary(fsum_path)?;
        let blocks = dim / STATS_PER_TENSOR;
        if sum.entries.len() != blocks * classes.len() {
            return Err(bad(format!(
                "{} entries for {} classes of dimension {dim}",
                sum.entries.len(),
                classes.len()
            )));
        }
        let mut centroids = Vec::with_capacity(classes.len());
        let mut layout = Vec::with_capacity(blocks);
        for (k, chunk) in sum.entries.chunks(blocks).enumerate() {
            let mut c = Vec::with_capacity(dim);
            for (b, e) in chunk.iter().enumerate() {
                let prefix = format!("c{k:05}/");
                let tensor = e
                    .name
                    .strip_prefix(&prefix)
                    .ok_or_else(|| bad(format!("entry `{}` outside class {k}", e.name)))?;
                if k == 0 {
                    layout.push((tensor.to_string(), b * STATS_PER_TENSOR));
                }
                c.extend_from_slice(&e.stats.to_array());
            }
            centroids.push(c);
        }
        if layout.iter().all(|(n, _)| n.starts_with("block")) {
            layout.clear();
        }
        Ok(Self {
            classes,
            centroids,
            counts,
            dim,
            layout,
        })
    }
}

fn bad(msg: String) -> ClassifierError {
    ClassifierError::BadManifest(msg)
}
