//! Declarative scenario files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::eval::{SplitPlan, SplitScheme};
use crate::features::LayerSelector;
use crate::sim::{Attribute, TrainConfig, WorldConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureModeTag {
    /// Statistics of the personalized weights themselves.
    #[default]
    RawWeights,
    /// Statistics of personalized minus global weights.
    Delta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub corpus_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DefenseConfig {
    pub samples_per_class: usize,
    /// Per attacked value (decimal string key) sample count overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class_override: BTreeMap<String, usize>,
    /// Continued-training schedule; the pretraining schedule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainConfig>,
}

impl DefenseConfig {
    pub fn samples_for(&self, value: usize) -> usize {
        self.per_class_override
            .get(&value.to_string())
            .copied()
            .unwrap_or(self.samples_per_class)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub world: WorldConfig,
    pub pretrain: PretrainConfig,
    /// Victim clients' personalization schedule.
    pub finetune: TrainConfig,
    /// Attacker's shadow schedule, when it differs from `finetune`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_finetune: Option<TrainConfig>,
    pub attribute: Attribute,
    pub class_values: Vec<usize>,
    /// Display names for `class_values`; `<attribute>=<value>` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub shadow_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    #[serde(default = "one")]
    pub utterances_per_speaker: usize,
    pub split: SplitPlan,
    #[serde(default)]
    pub feature_mode: FeatureModeTag,
    #[serde(default)]
    pub layer_selector: LayerSelector,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseConfig>,
}

fn one() -> usize {
    1
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn class_labels(&self) -> Vec<String> {
        match &self.class_names {
            Some(n) => n.clone(),
            None => self
                .class_values
                .iter()
                .map(|v| format!("{}={v}", self.attribute))
                .collect(),
        }
    }

    pub fn shadow_schedule(&self) -> &TrainConfig {
        self.shadow_finetune.as_ref().unwrap_or(&self.finetune)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.world
            .validate()
            .map_err(|e| ExperimentError::Config(format!("world: {e}")))?;
        for (field, tc) in [
            ("pretrain", &self.pretrain.train),
            ("finetune", &self.finetune),
        ]
        .into_iter()
        .chain(self.shadow_finetune.as_ref().map(|t| ("shadow_finetune", t)))
        {
            tc.validate()
                .map_err(|e| ExperimentError::Config(format!("{field}: {e}")))?;
        }
        if self.pretrain.corpus_size == 0 {
            return bad("pretrain.corpus_size must be positive".into());
        }
        let k = self.class_values.len();
        if k < 2 {
            return bad(format!("class_values needs at least 2 entries, got {k}"));
        }
        let card = *self.world.cardinalities.get(self.attribute);
        for (i, &v) in self.class_values.iter().enumerate() {
            if v >= card {
                return bad(format!(
                    "class_values[{i}] = {v} exceeds {} cardinality {card}",
                    self.attribute
                ));
            }
            if self.class_values[..i].contains(&v) {
                return bad(format!("class_values lists {v} twice"));
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() != k {
                return bad(format!("class_names has {} entries for {k} classes", names.len()));
            }
            for (i, n) in names.iter().enumerate() {
                if n.is_empty() || names[..i].contains(n) {
                    return bad(format!("class_names[{i}] is empty or repeated"));
                }
            }
        }
        if self.shadow_counts.len() != k {
            return bad(format!("shadow_counts has {} entries for {k} classes", self.shadow_counts.len()));
        }
        if self.test_counts.len() != k {
            return bad(format!("test_counts has {} entries for {k} classes", self.test_counts.len()));
        }
        if self.utterances_per_speaker == 0 {
            return bad("utterances_per_speaker must be positive".into());
        }
        self.split
            .validate()
            .map_err(|e| ExperimentError::Config(format!("split: {e}")))?;
        match self.split.scheme {
            SplitScheme::Designated => {
                if let Some(i) = self.shadow_counts.iter().position(|&n| n == 0) {
                    return bad(format!("shadow_counts[{i}] is 0; every class needs a centroid"));
                }
                if self.test_counts.iter().all(|&n| n == 0) {
                    return bad("test_counts are all 0".into());
                }
            }
            _ => {
                if let Some(i) = (0..k).find(|&i| self.shadow_counts[i] + self.test_counts[i] == 0) {
                    return bad(format!("class {i} has no speakers"));
                }
            }
        }
        if let Some(d) = &self.defense {
            for key in d.per_class_override.keys() {
                let ok = key
                    .parse::<usize>()
                    .map(|v| self.class_values.contains(&v))
                    .unwrap_or(false);
                if !ok {
                    return bad(format!("defense.per_class_override key `{key}` is not a class value"));
                }
            }
            if let Some(t) = &d.training {
                t.validate()
                    .map_err(|e| ExperimentError::Config(format!("defense.training: {e}")))?;
            }
        }
        Ok(())
    }
}
