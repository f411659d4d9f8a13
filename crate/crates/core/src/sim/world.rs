//! Synthetic speakers and their utterances.
//!
//! An utterance is a `T x D` matrix of frames. Every frame is the content
//! embedding of the scripted token at that position, plus one fixed offset
//! per speaker attribute, plus white noise:
//!
//! ```text
//! frame_t = content[script_t] + sum_a alpha_a * e_a(value_a) + noise_t
//! ```
//!
//! All speakers read the same script. The offset directions `e_a(v)` are
//! unit vectors fixed by the world seed, so an attribute value moves the
//! input distribution in a consistent direction for every speaker.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    AgeGroup,
    Accent,
    Emotion,
    Dysarthria,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Gender,
        Attribute::AgeGroup,
        Attribute::Accent,
        Attribute::Emotion,
        Attribute::Dysarthria,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::AgeGroup => "age_group",
            Attribute::Accent => "accent",
            Attribute::Emotion => "emotion",
            Attribute::Dysarthria => "dysarthria",
        }
    }
}

impl std::fmt::Display for Attribute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

/// One value per attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerAttribute<T> {
    pub gender: T,
    pub age_group: T,
    pub accent: T,
    pub emotion: T,
    pub dysarthria: T,
}

impl<T> PerAttribute<T> {
    pub fn get(&self, a: Attribute) -> &T {
        match a {
            Attribute::Gender => &self.gender,
            Attribute::AgeGroup => &self.age_group,
            Attribute::Accent => &self.accent,
            Attribute::Emotion => &self.emotion,
            Attribute::Dysarthria => &self.dysarthria,
        }
    }

    pub fn get_mut(&mut self, a: Attribute) -> &mut T {
        match a {
            Attribute::Gender => &mut self.gender,
            Attribute::AgeGroup => &mut self.age_group,
            Attribute::Accent => &mut self.accent,
            Attribute::Emotion => &mut self.emotion,
            Attribute::Dysarthria => &mut self.dysarthria,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Attribute) -> T) -> Self {
        Self {
            gender: f(Attribute::Gender),
            age_group: f(Attribute::AgeGroup),
            accent: f(Attribute::Accent),
            emotion: f(Attribute::Emotion),
            dysarthria: f(Attribute::Dysarthria),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub gender: usize,
    pub age_group: usize,
    pub accent: usize,
    pub emotion: usize,
    pub dysarthria: bool,
}

impl AttributeProfile {
    pub fn get(&self, a: Attribute) -> usize {
        match a {
            Attribute::Gender => self.gender,
            Attribute::AgeGroup => self.age_group,
            Attribute::Accent => self.accent,
            Attribute::Emotion => self.emotion,
            Attribute::Dysarthria => self.dysarthria as usize,
        }
    }

    pub fn set(&mut self, a: Attribute, v: usize) {
        match a {
            Attribute::Gender => self.gender = v,
            Attribute::AgeGroup => self.age_group = v,
            Attribute::Accent => self.accent = v,
            Attribute::Emotion => self.emotion = v,
            Attribute::Dysarthria => self.dysarthria = v != 0,
        }
    }

    pub fn from_values(v: &PerAttribute<usize>) -> Self {
        Self {
            gender: v.gender,
            age_group: v.age_group,
            accent: v.accent,
            emotion: v.emotion,
            dysarthria: v.dysarthria != 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpeaker {
    pub speaker_id: String,
    pub profile: AttributeProfile,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    /// Row-major `frames x dim`.
    pub frames: Vec<f64>,
    pub dim: usize,
    pub tokens: Vec<usize>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    /// Acoustic feature dimension D.
    pub feature_dim: usize,
    /// Token vocabulary size V.
    pub vocab_size: usize,
    /// Hidden width H of the model.
    pub hidden_width: usize,
    /// Frames per utterance T.
    pub frames: usize,
    pub cardinalities: PerAttribute<usize>,
    /// Offset magnitude alpha per attribute.
    pub effects: PerAttribute<f64>,
    /// Per-coordinate noise standard deviation.
    pub noise: f64,
    /// Attribute values present in global pre-training data.
    pub coverage: PerAttribute<Vec<usize>>,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidWorld(m));
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("vocab_size", self.vocab_size),
            ("hidden_width", self.hidden_width),
            ("frames", self.frames),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        for a in Attribute::ALL {
            let card = *self.cardinalities.get(a);
            if card == 0 {
                return bad(format!("cardinality of {a} must be positive"));
            }
            if a == Attribute::Dysarthria && card != 2 {
                return bad("dysarthria is boolean; its cardinality must be 2".into());
            }
            let alpha = *self.effects.get(a);
            if !(alpha.is_finite() && alpha >= 0.0) {
                return bad(format!("effect of {a} must be finite and >= 0"));
            }
            let cov = self.coverage.get(a);
            if cov.is_empty() {
                return bad(format!("coverage of {a} must not be empty"));
            }
            for (i, &v) in cov.iter().enumerate() {
                if v >= card {
                    return bad(format!("coverage of {a} lists {v}, cardinality is {card}"));
                }
                if cov[..i].contains(&v) {
                    return bad(format!("coverage of {a} lists {v} twice"));
                }
            }
        }
        Ok(())
    }

    pub fn covers(&self, a: Attribute, v: usize) -> bool {
        self.coverage.get(a).contains(&v)
    }

    pub fn check_profile(&self, p: &AttributeProfile) -> Result<(), SimError> {
        for a in Attribute::ALL {
            let card = *self.cardinalities.get(a);
            if p.get(a) >= card {
                return Err(SimError::InvalidProfile {
                    attribute: a,
                    value: p.get(a),
                    cardinality: card,
                });
            }
        }
        Ok(())
    }
}

/// A validated [`WorldConfig`] with its derived constants precomputed.
#[derive(Debug)]
pub struct World {
    config: WorldConfig,
    content: Vec<Vec<f64>>,
    script: Vec<usize>,
    directions: PerAttribute<Vec<Vec<f64>>>,
    synth_calls: AtomicUsize,
}

const STREAM_DIRECTION: u64 = 1;
const STREAM_CONTENT: u64 = 2;
const STREAM_SCRIPT: u64 = 3;

fn gaussian_vector(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gaussian()).collect()
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self, SimError> {
        config.validate()?;
        let d = config.feature_dim;
        let content = (0..config.vocab_size)
            .map(|tok| {
                let mut rng = SplitMix64::derive(config.seed, &[STREAM_CONTENT, tok as u64]);
                gaussian_vector(&mut rng, d)
            })
            .collect();
        let mut rng = SplitMix64::derive(config.seed, &[STREAM_SCRIPT]);
        let script = (0..config.frames)
            .map(|_| rng.below(config.vocab_size))
            .collect();
        let directions = PerAttribute::from_fn(|a| {
            (0..*config.cardinalities.get(a))
                .map(|v| effect_direction(config.seed, a, v, d))
                .collect()
        });
        Ok(Self {
            config,
            content,
            script,
            directions,
            synth_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    /// The token sequence every speaker reads.
    pub fn script(&self) -> &[usize] {
        &self.script
    }

    pub fn content_embedding(&self, token: usize) -> &[f64] {
        &self.content[token]
    }

    /// Unit direction `e_a(v)`.
    pub fn direction(&self, a: Attribute, v: usize) -> &[f64] {
        &self.directions.get(a)[v]
    }

    /// Number of utterances synthesized so far through this world.
    pub fn synthesis_count(&self) -> usize {
        self.synth_calls.load(Ordering::Relaxed)
    }

    /// Sum of attribute offsets for `profile`.
    pub fn attribute_offset(&self, profile: &AttributeProfile) -> Vec<f64> {
        let mut off = vec![0.0; self.config.feature_dim];
        for a in Attribute::ALL {
            let alpha = *self.config.effects.get(a);
            for (o, e) in off.iter_mut().zip(self.direction(a, profile.get(a))) {
                *o += alpha * e;
            }
        }
        off
    }

    pub fn synthesize_utterance(
        &self,
        spk: &SyntheticSpeaker,
        utt_index: usize,
    ) -> Result<Utterance, SimError> {
        self.config.check_profile(&spk.profile)?;
        self.synth_calls.fetch_add(1, Ordering::Relaxed);
        let d = self.config.feature_dim;
        let offset = self.attribute_offset(&spk.profile);
        let mut rng = SplitMix64::derive(spk.seed, &[utt_index as u64]);
        let sigma = self.config.noise;
        let mut frames = Vec::with_capacity(self.script.len() * d);
        for &tok in &self.script {
            for (c, o) in self.content[tok].iter().zip(&offset) {
                let noise = if sigma > 0.0 { sigma * rng.gaussian() } else { 0.0 };
                frames.push(c + o + noise);
            }
        }
        Ok(Utterance {
            frames,
            dim: d,
            tokens: self.script.clone(),
        })
    }
}

fn effect_direction(seed: u64, a: Attribute, v: usize, d: usize) -> Vec<f64> {
    let mut rng = SplitMix64::derive(seed, &[STREAM_DIRECTION, a.index() as u64, v as u64]);
    loop {
        let g = gaussian_vector(&mut rng, d);
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}
