//! Train/test split plans: hold-out, k-fold, leave-one-speaker-out, and
//! designated (train and test fixed by each sample's role).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Holdout { train_fraction: f64, stratified: bool },
    KFold { k: usize, stratified: bool },
    LeaveOneSpeakerOut,
    /// Shadow-role samples train, target-role samples test.
    Designated,
}

impl FromStr for SplitScheme {
    type Err = EvalError;

    /// Compact tags: `holdout:0.75[:stratified]`, `k_fold:5[:stratified]`,
    /// `leave_one_speaker_out`, `designated`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let unknown = || EvalError::UnknownScheme(s.to_string());
        let stratified = match parts.get(2) {
            None => false,
            Some(&"stratified") => true,
            Some(_) => return Err(unknown()),
        };
        match parts.as_slice() {
            ["holdout", f, ..] => Ok(SplitScheme::Holdout {
                train_fraction: f.parse().map_err(|_| unknown())?,
                stratified,
            }),
            ["k_fold", k, ..] => Ok(SplitScheme::KFold {
                k: k.parse().map_err(|_| unknown())?,
                stratified,
            }),
            ["leave_one_speaker_out"] => Ok(SplitScheme::LeaveOneSpeakerOut),
            ["designated"] => Ok(SplitScheme::Designated),
            _ => Err(unknown()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub seed: u64,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self.scheme {
            SplitScheme::Holdout { train_fraction, .. }
                if !(train_fraction > 0.0 && train_fraction < 1.0) =>
            {
                Err(EvalError::InvalidPlan(format!(
                    "holdout train_fraction must lie in (0, 1), got {train_fraction}"
                )))
            }
            SplitScheme::KFold { k, .. } if k < 2 => {
                Err(EvalError::InvalidPlan(format!("k_fold needs k >= 2, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRole {
    Shadow,
    Target,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMeta {
    pub class: usize,
    pub speaker: String,
    pub role: SampleRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_groups(samples: &[SampleMeta]) -> Vec<Vec<usize>> {
    let n_classes = samples.iter().map(|s| s.class + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); n_classes];
    for (i, s) in samples.iter().enumerate() {
        groups[s.class].push(i);
    }
    groups
}

pub fn make_splits(samples: &[SampleMeta], plan: &SplitPlan) -> Result<Vec<Split>, EvalError> {
    plan.validate()?;
    let too_few = |m: String| Err(EvalError::TooFewSamples(m));
    match plan.scheme {
        SplitScheme::Holdout {
            train_fraction,
            stratified,
        } => {
            let groups = if stratified {
                class_groups(samples)
            } else {
                vec![(0..samples.len()).collect()]
            };
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (g, mut idx) in groups.into_iter().enumerate() {
                if idx.is_empty() {
                    continue;
                }
                if idx.len() < 2 {
                    return too_few(format!("group {g} has {} sample(s), holdout needs 2", idx.len()));
                }
                SplitMix64::derive(plan.seed, &[0, g as u64]).shuffle(&mut idx);
                let n_train = ((train_fraction * idx.len() as f64).round() as usize)
                    .clamp(1, idx.len() - 1);
                train.extend_from_slice(&idx[..n_train]);
                test.extend_from_slice(&idx[n_train..]);
            }
            if train.is_empty() || test.is_empty() {
                return too_few("holdout needs at least 2 samples".into());
            }
            train.sort_unstable();
            test.sort_unstable();
            Ok(vec![Split { train, test }])
        }
        SplitScheme::KFold { k, stratified } => {
            let groups = if stratified {
                class_groups(samples)
            } else {
                vec![(0..samples.len()).collect()]
            };
            if samples.len() < k {
                return too_few(format!("{} samples for {k} folds", samples.len()));
            }
            let mut fold_of = vec![0usize; samples.len()];
            let mut pos = 0;
            for (g, mut idx) in groups.into_iter().enumerate() {
                if stratified && !idx.is_empty() && idx.len() < k {
                    return too_few(format!("class {g} has {} samples for {k} folds", idx.len()));
                }
                SplitMix64::derive(plan.seed, &[1, g as u64]).shuffle(&mut idx);
                for i in idx {
                    fold_of[i] = pos % k;
                    pos += 1;
                }
            }
            Ok((0..k)
                .map(|f| {
                    let (test, train): (Vec<usize>, Vec<usize>) =
                        (0..samples.len()).partition(|&i| fold_of[i] == f);
                    Split { train, test }
                })
                .collect())
        }
        SplitScheme::LeaveOneSpeakerOut => {
            let mut speakers: Vec<&str> = Vec::new();
            for s in samples {
                if !speakers.contains(&s.speaker.as_str()) {
                    speakers.push(&s.speaker);
                }
            }
            if speakers.len() < 2 {
                return too_few(format!("{} distinct speaker(s)", speakers.len()));
            }
            Ok(speakers
                .iter()
                .map(|spk| {
                    let (test, train): (Vec<usize>, Vec<usize>) =
                        (0..samples.len()).partition(|&i| samples[i].speaker == *spk);
                    Split { train, test }
                })
                .collect())
        }
        SplitScheme::Designated => {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..samples.len()).partition(|&i| samples[i].role == SampleRole::Shadow);
            if train.is_empty() || test.is_empty() {
                return too_few(format!(
                    "designated split has {} shadow and {} target samples",
                    train.len(),
                    test.len()
                ));
            }
            Ok(vec![Split { train, test }])
        }
    }
}
