//! Weight snapshots: named parameter tensors of one model instance.
//!
//! A snapshot keeps its tensors sorted by name (byte order). Feature vectors
//! from two snapshots of the same architecture therefore line up position by
//! position, which the centroid comparison relies on.

use std::collections::HashSet;

use thiserror::Error;

use crate::features::TensorStats;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot has no tensors")]
    EmptySnapshot,
    #[error("tensor name must not be empty")]
    EmptyName,
    #[error("duplicate tensor name `{0}`")]
    DuplicateTensorName(String),
    #[error("tensor `{name}`: shape implies {expected} values, found {actual}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("tensor `{name}`: dimension {axis} has size 0")]
    ZeroDimension { name: String, axis: usize },
    #[error("tensor `{name}`: non-finite value at index {index}")]
    NonFiniteValue { name: String, index: usize },
    #[error("tensor `{name}` is out of canonical (sorted by name) order")]
    UnsortedTensors { name: String },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    TruncatedFile(&'static str),
    #[error("{0} bytes of trailing data after last record")]
    TrailingBytes(usize),
    #[error("invalid utf-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("`{0}` does not fit the on-disk field width")]
    FieldOverflow(String),
}

pub type Result<T, E = SnapshotError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let t = Self {
            name: name.into(),
            shape,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    /// Number of elements implied by the shape.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(SnapshotError::EmptyName);
        }
        if let Some(axis) = self.shape.iter().position(|&d| d == 0) {
            return Err(SnapshotError::ZeroDimension {
                name: self.name.clone(),
                axis,
            });
        }
        if self.values.len() != self.numel() {
            return Err(SnapshotError::ShapeMismatch {
                name: self.name.clone(),
                expected: self.numel(),
                actual: self.values.len(),
            });
        }
        if let Some(index) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(SnapshotError::NonFiniteValue {
                name: self.name.clone(),
                index,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSnapshot {
    pub model_id: String,
    pub tensors: Vec<TensorRecord>,
}

impl WeightSnapshot {
    /// Builds a snapshot, putting tensors into canonical order and validating.
    pub fn new(model_id: impl Into<String>, mut tensors: Vec<TensorRecord>) -> Result<Self> {
        tensors.sort_by(|a, b| a.name.as_bytes().cmp(b.name.as_bytes()));
        let s = Self {
            model_id: model_id.into(),
            tensors,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        validate_snapshot(self)
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors
            .binary_search_by(|t| t.name.as_bytes().cmp(name.as_bytes()))
            .ok()
            .map(|i| &self.tensors[i])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }

    /// Fails with `ArchitectureMismatch` unless both snapshots have the same
    /// tensor names (in the same order) and shapes.
    pub fn check_same_architecture(&self, other: &WeightSnapshot) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(SnapshotError::ArchitectureMismatch(format!(
                "{} tensors in `{}` vs {} in `{}`",
                self.tensors.len(),
                self.model_id,
                other.tensors.len(),
                other.model_id
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.name != b.name {
                return Err(SnapshotError::ArchitectureMismatch(format!(
                    "tensor `{}` has no counterpart (found `{}`)",
                    a.name, b.name
                )));
            }
            if a.shape != b.shape {
                return Err(SnapshotError::ArchitectureMismatch(format!(
                    "tensor `{}`: shape {:?} vs {:?}",
                    a.name, a.shape, b.shape
                )));
            }
        }
        Ok(())
    }
}

/// Checks every tensor invariant plus name uniqueness and canonical order.
pub fn validate_snapshot(s: &WeightSnapshot) -> Result<()> {
    if s.tensors.is_empty() {
        return Err(SnapshotError::EmptySnapshot);
    }
    let mut seen = HashSet::with_capacity(s.tensors.len());
    for t in &s.tensors {
        if !seen.insert(t.name.as_str()) {
            return Err(SnapshotError::DuplicateTensorName(t.name.clone()));
        }
    }
    for t in &s.tensors {
        t.validate()?;
    }
    check_sorted(s.tensors.iter().map(|t| t.name.as_str()))
}

fn check_sorted<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut prev: Option<&str> = None;
    for name in names {
        if let Some(p) = prev {
            if p.as_bytes() >= name.as_bytes() {
                return Err(SnapshotError::UnsortedTensors {
                    name: name.to_string(),
                });
            }
        }
        prev = Some(name);
    }
    Ok(())
}

/// Suffix appended to the client model id of a delta snapshot.
pub const DELTA_TAG: &str = "#delta";

/// Element-wise `w_s - w_g`.
pub fn snapshot_delta(w_s: &WeightSnapshot, w_g: &WeightSnapshot) -> Result<WeightSnapshot> {
    w_s.check_same_architecture(w_g)?;
    let tensors = w_s
        .tensors
        .iter()
        .zip(&w_g.tensors)
        .map(|(s, g)| TensorRecord {
            name: s.name.clone(),
            shape: s.shape.clone(),
            values: s.values.iter().zip(&g.values).map(|(a, b)| a - b).collect(),
        })
        .collect();
    Ok(WeightSnapshot {
        model_id: format!("{}{}", w_s.model_id, DELTA_TAG),
        tensors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryEntry {
    pub name: String,
    pub stats: TensorStats,
}

/// Per-tensor statistics only; the compact stand-in for snapshots of models
/// too large to store in full.
#[derive(Clone, Debug, PartialEq)]
pub struct SummarySnapshot {
    pub model_id: String,
    pub entries: Vec<SummaryEntry>,
}

impl SummarySnapshot {
    pub fn new(model_id: impl Into<String>, mut entries: Vec<SummaryEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.name.as_bytes().cmp(b.name.as_bytes()));
        let s = Self {
            model_id: model_id.into(),
            entries,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_snapshot(s: &WeightSnapshot) -> Result<Self> {
        s.validate()?;
        let entries = s
            .tensors
            .iter()
            .map(|t| SummaryEntry {
                name: t.name.clone(),
                stats: crate::features::summarize_values(&t.values)
                    .expect("validated tensors are non-empty"),
            })
            .collect();
        Ok(Self {
            model_id: s.model_id.clone(),
            entries,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(SnapshotError::EmptySnapshot);
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if e.name.is_empty() {
                return Err(SnapshotError::EmptyName);
            }
            if !seen.insert(e.name.as_str()) {
                return Err(SnapshotError::DuplicateTensorName(e.name.clone()));
            }
            if let Some(index) = e.stats.to_array().iter().position(|v| !v.is_finite()) {
                return Err(SnapshotError::NonFiniteValue {
                    name: e.name.clone(),
                    index,
                });
            }
        }
        check_sorted(self.entries.iter().map(|e| e.name.as_str()))
    }
}
