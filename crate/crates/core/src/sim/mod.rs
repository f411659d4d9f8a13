//! Desk-scale federated personalization: a global model pre-trained on a
//! corpus with controlled attribute coverage, then fine-tuned per client on a
//! single utterance.

pub mod model;
pub mod world;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::TinyModel;
pub use world::{
    Attribute, AttributeProfile, PerAttribute, SyntheticSpeaker, Utterance, World, WorldConfig,
};

use crate::rng::SplitMix64;
use crate::snapshot::{SnapshotError, WeightSnapshot};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world config: {0}")]
    InvalidWorld(String),
    #[error("{attribute} value {value} outside cardinality {cardinality}")]
    InvalidProfile {
        attribute: Attribute,
        value: usize,
        cardinality: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("pre-training corpus is empty")]
    EmptyCorpus,
    #[error("speaker `{speaker}` has {attribute} = {value}, which is outside pre-training coverage")]
    CoverageViolation {
        speaker: String,
        attribute: Attribute,
        value: usize,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            steps: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(SimError::InvalidTrainConfig(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// `size` speakers whose attribute values are all drawn from the world's
/// coverage. For every attribute the covered values are assigned round-robin
/// and then shuffled, so per-value counts differ by at most one.
pub fn pretraining_corpus(world: &WorldConfig, size: usize, seed: u64) -> Vec<SyntheticSpeaker> {
    let columns = PerAttribute::from_fn(|a| {
        let cov = world.coverage.get(a);
        let mut col: Vec<usize> = (0..size).map(|i| cov[i % cov.len()]).collect();
        SplitMix64::derive(seed, &[0, a.index() as u64]).shuffle(&mut col);
        col
    });
    (0..size)
        .map(|i| SyntheticSpeaker {
            speaker_id: format!("pretrain-{i}"),
            profile: AttributeProfile::from_values(&PerAttribute::from_fn(|a| columns.get(a)[i])),
            seed: SplitMix64::derive(seed, &[1, i as u64]).next_u64(),
        })
        .collect()
}

/// Trains from `start` for `cfg.steps` single-utterance steps, cycling through
/// `corpus`; step `k` uses speaker `k % n` and utterance index `k / n`.
pub fn continue_training(
    start: &TinyModel,
    world: &World,
    cfg: &TrainConfig,
    corpus: &[SyntheticSpeaker],
) -> Result<TinyModel, SimError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    let mut m = start.clone();
    for k in 0..cfg.steps {
        let spk = &corpus[k % corpus.len()];
        let u = world.synthesize_utterance(spk, k / corpus.len())?;
        m = m.train_step(&u, cfg.learning_rate)?;
    }
    Ok(m)
}

fn check_coverage(world: &WorldConfig, corpus: &[SyntheticSpeaker]) -> Result<(), SimError> {
    for spk in corpus {
        for a in Attribute::ALL {
            let v = spk.profile.get(a);
            if !world.covers(a, v) {
                return Err(SimError::CoverageViolation {
                    speaker: spk.speaker_id.clone(),
                    attribute: a,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

pub fn initial_model(world: &WorldConfig, seed: u64) -> TinyModel {
    TinyModel::init(world.feature_dim, world.hidden_width, world.vocab_size, seed)
}

/// Global model W_g: deterministic initialization from `cfg.seed`, then
/// `cfg.steps` steps over a coverage-respecting corpus.
pub fn pretrain_global(
    world: &World,
    cfg: &TrainConfig,
    corpus: &[SyntheticSpeaker],
) -> Result<WeightSnapshot, SimError> {
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    check_coverage(world.config(), corpus)?;
    let init = initial_model(world.config(), cfg.seed);
    Ok(continue_training(&init, world, cfg, corpus)?.to_snapshot("global"))
}

/// Personalizes `w_g` on exactly one utterance of `spk` (index 0).
pub fn client_finetune(
    w_g: &WeightSnapshot,
    spk: &SyntheticSpeaker,
    world: &World,
    cfg: &TrainConfig,
) -> Result<WeightSnapshot, SimError> {
    client_finetune_on(w_g, spk, 0, world, cfg)
}

/// Like [`client_finetune`], for speakers contributing several independent
/// samples; each sample is its own single-utterance personalization.
pub fn client_finetune_on(
    w_g: &WeightSnapshot,
    spk: &SyntheticSpeaker,
    utt_index: usize,
    world: &World,
    cfg: &TrainConfig,
) -> Result<WeightSnapshot, SimError> {
    cfg.validate()?;
    let mut m = TinyModel::from_snapshot(w_g)?;
    let wc = world.config();
    if (m.input_dim, m.hidden, m.vocab) != (wc.feature_dim, wc.hidden_width, wc.vocab_size) {
        return Err(SimError::ArchitectureMismatch(format!(
            "global model is {}x{}x{}, world expects {}x{}x{}",
            m.input_dim, m.hidden, m.vocab, wc.feature_dim, wc.hidden_width, wc.vocab_size
        )));
    }
    let u = world.synthesize_utterance(spk, utt_index)?;
    for _ in 0..cfg.steps {
        m = m.train_step(&u, cfg.learning_rate)?;
    }
    let id = if utt_index == 0 {
        spk.speaker_id.clone()
    } else {
        format!("{}/{utt_index}", spk.speaker_id)
    };
    Ok(m.to_snapshot(id))
}

/// One personalized model per labeled speaker, in input order. Runs on the
/// current rayon pool; the output does not depend on the pool size.
pub fn build_shadow_set(
    w_g: &WeightSnapshot,
    speakers: &[(SyntheticSpeaker, String)],
    world: &World,
    cfg: &TrainConfig,
) -> Result<Vec<(WeightSnapshot, String)>, SimError> {
    speakers
        .par_iter()
        .map(|(spk, label)| Ok((client_finetune(w_g, spk, world, cfg)?, label.clone())))
        .collect()
}
