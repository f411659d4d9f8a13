//! End-to-end scenario runs: pre-train the global model, personalize one
//! model per (speaker, utterance), extract weight-statistics features, and
//! evaluate the centroid attack under the configured split plan.
//!
//! All randomness derives from the scenario's master seed through fixed
//! sub-streams, and every parallel section collects results in input order,
//! so a report does not depend on the worker count.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{FeatureModeTag, ScenarioConfig};
use super::report::{
    ClassDelta, DefenseBlock, DefenseOutcome, FoldRecord, LayerRow, OperationCounts,
    ReportDocument, ReportKind, RosterEntry, UnseenBlock, REPORT_FORMAT_VERSION,
};
use super::ExperimentError;
use crate::centroid::CentroidModel;
use crate::eval::{
    confusion_proportions, evaluate_fold, make_splits, pool_confusions, summarize_folds,
    FoldResult, SampleMeta, SampleRole, Split, SplitPlan, SplitScheme,
};
use crate::eval::metrics::class_metrics;
use crate::eval::interval::DEFAULT_LEVEL;
use crate::features::{extract_features, FeatureMode, FeatureVector, LayerSelector};
use crate::format::save_snapshot;
use crate::rng::{derive_seed, SplitMix64};
use crate::sim::{
    client_finetune_on, continue_training, pretrain_global, pretraining_corpus, Attribute,
    AttributeProfile, PerAttribute, SyntheticSpeaker, TinyModel, TrainConfig, World,
};
use crate::snapshot::WeightSnapshot;

const STREAM_PRETRAIN_INIT: u64 = 1;
const STREAM_PRETRAIN_CORPUS: u64 = 2;
const STREAM_SPEAKER: u64 = 3;
const STREAM_PROFILE: u64 = 4;
const STREAM_SPLIT: u64 = 5;
const STREAM_DEFENSE_SPEAKER: u64 = 6;
const STREAM_DEFENSE_PROFILE: u64 = 7;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// When set, the global model and every personalized model are written
    /// here as `.fsnp` files, with `labels.csv` listing the shadow models
    /// and `targets.csv` the test models.
    pub snapshot_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            snapshot_dir: None,
        }
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| ExperimentError::Io(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// One personalized model to build: a speaker, which of their utterances,
/// the class it belongs to, and its designated role.
#[derive(Clone, Debug)]
struct Sample {
    speaker: SyntheticSpeaker,
    utterance: usize,
    class: usize,
    role: SampleRole,
}

/// The attacked classes of a run.
struct ClassPlan {
    values: Vec<usize>,
    labels: Vec<String>,
    shadow_counts: Vec<usize>,
    test_counts: Vec<usize>,
}

impl ClassPlan {
    fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            values: cfg.class_values.clone(),
            labels: cfg.class_labels(),
            shadow_counts: cfg.shadow_counts.clone(),
            test_counts: cfg.test_counts.clone(),
        }
    }
}

/// The attacked attribute is fixed; every other attribute is drawn from the
/// values pre-training covered, so a client differs from the pre-training
/// population only in the attribute under attack.
fn random_profile(
    cfg: &ScenarioConfig,
    attacked_value: usize,
    rng: &mut SplitMix64,
) -> AttributeProfile {
    let values = PerAttribute::from_fn(|a| {
        if a == cfg.attribute {
            attacked_value
        } else {
            let cov = cfg.world.coverage.get(a);
            cov[rng.below(cov.len())]
        }
    });
    AttributeProfile::from_values(&values)
}

/// Speakers of every class; within a class the first `shadow_counts[c]`
/// speakers are shadows and the rest targets. A speaker's seed depends only
/// on (master seed, attribute, value, position), never on counts of other
/// classes.
fn build_roster(cfg: &ScenarioConfig, plan: &ClassPlan) -> Vec<Sample> {
    let attr = cfg.attribute.index() as u64;
    let mut samples = Vec::new();
    for (c, &v) in plan.values.iter().enumerate() {
        let n = plan.shadow_counts[c] + plan.test_counts[c];
        for i in 0..n {
            let path = [attr, v as u64, i as u64];
            let seed = derive_seed(cfg.master_seed, &[STREAM_SPEAKER, path[0], path[1], path[2]]);
            let mut rng =
                SplitMix64::derive(cfg.master_seed, &[STREAM_PROFILE, path[0], path[1], path[2]]);
            let speaker = SyntheticSpeaker {
                speaker_id: format!("{}-{i:03}", plan.labels[c]),
                profile: random_profile(cfg, v, &mut rng),
                seed,
            };
            let role = if i < plan.shadow_counts[c] {
                SampleRole::Shadow
            } else {
                SampleRole::Target
            };
            for utterance in 0..cfg.utterances_per_speaker {
                samples.push(Sample {
                    speaker: speaker.clone(),
                    utterance,
                    class: c,
                    role,
                });
            }
        }
    }
    samples
}

fn pretrain_schedule(cfg: &ScenarioConfig) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(
            cfg.master_seed,
            &[STREAM_PRETRAIN_INIT, cfg.pretrain.train.seed],
        ),
        ..cfg.pretrain.train.clone()
    }
}

fn global_model(cfg: &ScenarioConfig, world: &World) -> Result<WeightSnapshot, ExperimentError> {
    let corpus = pretraining_corpus(
        &cfg.world,
        cfg.pretrain.corpus_size,
        derive_seed(cfg.master_seed, &[STREAM_PRETRAIN_CORPUS, cfg.pretrain.train.seed]),
    );
    Ok(pretrain_global(world, &pretrain_schedule(cfg), &corpus)?)
}

fn personalize(
    cfg: &ScenarioConfig,
    global: &WeightSnapshot,
    samples: &[Sample],
    world: &World,
) -> Result<Vec<WeightSnapshot>, ExperimentError> {
    samples
        .par_iter()
        .map(|s| {
            let schedule = match s.role {
                SampleRole::Shadow => cfg.shadow_schedule(),
                SampleRole::Target => &cfg.finetune,
            };
            Ok(client_finetune_on(global, &s.speaker, s.utterance, world, schedule)?)
        })
        .collect()
}

fn featurize(
    snaps: &[WeightSnapshot],
    global: &WeightSnapshot,
    selector: &LayerSelector,
    mode: FeatureModeTag,
) -> Result<Vec<FeatureVector>, ExperimentError> {
    let mode = match mode {
        FeatureModeTag::RawWeights => FeatureMode::RawWeights,
        FeatureModeTag::Delta => FeatureMode::Delta(global),
    };
    snaps
        .par_iter()
        .map(|s| Ok(extract_features(s, selector, mode)?))
        .collect()
}

struct AttackOutcome {
    folds: Vec<FoldRecord>,
    fold_accuracies: Vec<f64>,
}

fn attack(
    labels: &[String],
    samples: &[Sample],
    feats: &[FeatureVector],
    splits: &[Split],
) -> Result<AttackOutcome, ExperimentError> {
    let folds = splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| {
            let train: Vec<(FeatureVector, String)> = split
                .train
                .iter()
                .map(|&i| (feats[i].clone(), labels[samples[i].class].clone()))
                .collect();
            let test: Vec<(FeatureVector, String)> = split
                .test
                .iter()
                .map(|&i| (feats[i].clone(), labels[samples[i].class].clone()))
                .collect();
            let model = CentroidModel::fit_with_classes(labels, &train)?;
            let result: FoldResult = evaluate_fold(&model, &test)?;
            let predicted = test
                .iter()
                .map(|(z, _)| Ok(model.predict(z)?.label))
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            Ok(FoldRecord {
                fold,
                train: split.train.clone(),
                test: split.test.clone(),
                predicted,
                result,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let fold_accuracies = folds.iter().map(|f| f.result.accuracy).collect();
    Ok(AttackOutcome {
        folds,
        fold_accuracies,
    })
}

fn split_plan(cfg: &ScenarioConfig) -> SplitPlan {
    SplitPlan {
        scheme: cfg.split.scheme.clone(),
        seed: derive_seed(cfg.master_seed, &[STREAM_SPLIT, cfg.split.seed]),
    }
}

fn sample_meta(samples: &[Sample]) -> Vec<SampleMeta> {
    samples
        .iter()
        .map(|s| SampleMeta {
            class: s.class,
            speaker: s.speaker.speaker_id.clone(),
            role: s.role,
        })
        .collect()
}

/// Everything computed up to (and including) the personalized models.
struct Personalized {
    samples: Vec<Sample>,
    snaps: Vec<WeightSnapshot>,
    splits: Vec<Split>,
}

fn prepare(
    cfg: &ScenarioConfig,
    plan: &ClassPlan,
    global: &WeightSnapshot,
    world: &World,
    opts: &RunOptions,
) -> Result<Personalized, ExperimentError> {
    let samples = build_roster(cfg, plan);
    let splits = make_splits(&sample_meta(&samples), &split_plan(cfg))?;
    let snaps = opts.install(|| personalize(cfg, global, &samples, world))??;
    if let Some(dir) = &opts.snapshot_dir {
        write_snapshots(dir, global, &samples, &snaps, &plan.labels)?;
    }
    Ok(Personalized {
        samples,
        snaps,
        splits,
    })
}

fn write_snapshots(
    dir: &std::path::Path,
    global: &WeightSnapshot,
    samples: &[Sample],
    snaps: &[WeightSnapshot],
    labels: &[String],
) -> Result<(), ExperimentError> {
    let io = |e: std::io::Error| ExperimentError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    save_snapshot(global, dir.join("global.fsnp"))?;
    let mut shadows = String::from("path,label\n");
    let mut targets = String::from("path,label\n");
    for (s, snap) in samples.iter().zip(snaps) {
        let file = format!("{}-u{}.fsnp", s.speaker.speaker_id, s.utterance);
        save_snapshot(snap, dir.join(&file))?;
        let list = match s.role {
            SampleRole::Shadow => &mut shadows,
            SampleRole::Target => &mut targets,
        };
        writeln!(list, "{file},{}", labels[s.class]).unwrap();
    }
    std::fs::write(dir.join("labels.csv"), shadows).map_err(io)?;
    std::fs::write(dir.join("targets.csv"), targets).map_err(io)?;
    Ok(())
}

struct ReportParts<'a> {
    cfg: &'a ScenarioConfig,
    kind: ReportKind,
    plan: &'a ClassPlan,
    samples: &'a [Sample],
    outcome: AttackOutcome,
    feature_dim: usize,
    pretrain_steps: usize,
    extra_syntheses: usize,
}

fn assemble(parts: ReportParts<'_>) -> Result<ReportDocument, ExperimentError> {
    let ReportParts {
        cfg,
        kind,
        plan,
        samples,
        outcome,
        feature_dim,
        pretrain_steps,
        extra_syntheses,
    } = parts;
    let labels = &plan.labels;
    let accuracy = summarize_folds(&outcome.fold_accuracies, DEFAULT_LEVEL)?;
    let confusion = pool_confusions(outcome.folds.iter().map(|f| &f.result.confusion));
    let per_class = class_metrics(&confusion, labels);
    let is_designated = matches!(cfg.split.scheme, SplitScheme::Designated);
    let train_only_classes: Vec<String> = (0..labels.len())
        .filter(|&c| is_designated && plan.test_counts[c] == 0)
        .map(|c| labels[c].clone())
        .collect();

    let mut warnings = Vec::new();
    if accuracy.degenerate {
        warnings.push("single fold: standard error reported as 0, interval is degenerate".into());
    }
    for m in &per_class {
        if m.recall_undefined && !train_only_classes.contains(&m.class) {
            warnings.push(format!("class `{}` has no test samples; recall reported as 0", m.class));
        }
        if m.precision_undefined {
            warnings.push(format!("class `{}` was never predicted; precision reported as 0", m.class));
        }
    }

    let finetune_steps = samples
        .iter()
        .map(|s| match s.role {
            SampleRole::Shadow => cfg.shadow_schedule().steps,
            SampleRole::Target => cfg.finetune.steps,
        })
        .sum();
    let predictions = outcome.folds.iter().map(|f| f.test.len()).sum();
    let roster = samples
        .iter()
        .enumerate()
        .map(|(i, s)| RosterEntry {
            sample: i,
            speaker_id: s.speaker.speaker_id.clone(),
            speaker_seed: s.speaker.seed,
            utterance: s.utterance,
            class: labels[s.class].clone(),
            role: s.role,
        })
        .collect();

    Ok(ReportDocument {
        format_version: REPORT_FORMAT_VERSION,
        kind,
        scenario: cfg.clone(),
        defense: None,
        unseen: None,
        classes: labels.clone(),
        train_only_classes,
        feature_dim,
        roster,
        folds: outcome.folds,
        accuracy,
        confusion_proportions: confusion_proportions(&confusion),
        confusion,
        per_class,
        layers: Vec::new(),
        warnings,
        operations: OperationCounts {
            pretrain_steps,
            finetunes: samples.len(),
            finetune_steps,
            utterances_synthesized: pretrain_steps + samples.len() + extra_syntheses,
            predictions,
        },
    })
}

/// Runs the attack for `plan` against a given global model.
fn run_against(
    cfg: &ScenarioConfig,
    kind: ReportKind,
    plan: &ClassPlan,
    world: &World,
    global: &WeightSnapshot,
    opts: &RunOptions,
    pretrain_steps: usize,
    extra_syntheses: usize,
) -> Result<ReportDocument, ExperimentError> {
    let p = prepare(cfg, plan, global, world, opts)?;
    let feats = opts.install(|| featurize(&p.snaps, global, &cfg.layer_selector, cfg.feature_mode))??;
    let outcome = opts.install(|| attack(&plan.labels, &p.samples, &feats, &p.splits))??;
    assemble(ReportParts {
        cfg,
        kind,
        plan,
        samples: &p.samples,
        outcome,
        feature_dim: feats[0].dim(),
        pretrain_steps,
        extra_syntheses,
    })
}

fn setup(cfg: &ScenarioConfig) -> Result<(World, WeightSnapshot), ExperimentError> {
    cfg.validate()?;
    let world = World::new(cfg.world.clone())?;
    let global = global_model(cfg, &world)?;
    Ok((world, global))
}

/// Binary or multi-class, chosen by the number of class values.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ReportDocument, ExperimentError> {
    let kind = if cfg.class_values.len() == 2 {
        ReportKind::Binary
    } else {
        ReportKind::Multiclass
    };
    let (world, global) = setup(cfg)?;
    run_against(
        cfg,
        kind,
        &ClassPlan::from_config(cfg),
        &world,
        &global,
        opts,
        cfg.pretrain.train.steps,
        0,
    )
}

pub fn run_binary_scenario(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<ReportDocument, ExperimentError> {
    if cfg.class_values.len() != 2 {
        return Err(ExperimentError::Config(format!(
            "binary scenario needs exactly 2 class_values, got {}",
            cfg.class_values.len()
        )));
    }
    run_scenario(cfg, opts)
}

pub fn run_multiclass_scenario(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<ReportDocument, ExperimentError> {
    if cfg.class_values.len() < 3 {
        return Err(ExperimentError::Config(format!(
            "multi-class scenario needs at least 3 class_values, got {}",
            cfg.class_values.len()
        )));
    }
    run_scenario(cfg, opts)
}

/// One personalized model set, attacked once per single tensor and once
/// with all tensors. The report body (folds, confusion) is the all-tensor
/// baseline; `layers` holds every row.
pub fn run_layer_sweep(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<ReportDocument, ExperimentError> {
    if cfg.class_values.len() != 2 {
        return Err(ExperimentError::Config(format!(
            "layer sweep needs a binary scenario, got {} classes",
            cfg.class_values.len()
        )));
    }
    let (world, global) = setup(cfg)?;
    let plan = ClassPlan::from_config(cfg);
    let p = prepare(cfg, &plan, &global, &world, opts)?;

    let mut selectors: Vec<(LayerSelector, bool)> = global
        .names()
        .map(|n| (LayerSelector::NameList(vec![n.to_string()]), false))
        .collect();
    selectors.push((LayerSelector::All, true));

    let mut rows = Vec::with_capacity(selectors.len());
    let mut baseline = None;
    for (sel, is_baseline) in selectors {
        let feats = opts.install(|| featurize(&p.snaps, &global, &sel, cfg.feature_mode))??;
        let outcome = opts.install(|| attack(&plan.labels, &p.samples, &feats, &p.splits))??;
        let summary = summarize_folds(&outcome.fold_accuracies, DEFAULT_LEVEL)?;
        rows.push(LayerRow {
            selector: match &sel {
                LayerSelector::NameList(l) if l.len() == 1 => l[0].clone(),
                other => other.label(),
            },
            dim: feats[0].dim(),
            fold_accuracies: outcome.fold_accuracies.clone(),
            summary,
            baseline: is_baseline,
        });
        if is_baseline {
            baseline = Some((outcome, feats[0].dim()));
        }
    }
    let (outcome, feature_dim) = baseline.expect("baseline row is always present");
    let mut report = assemble(ReportParts {
        cfg,
        kind: ReportKind::LayerSweep,
        plan: &plan,
        samples: &p.samples,
        outcome,
        feature_dim,
        pretrain_steps: cfg.pretrain.train.steps,
        extra_syntheses: 0,
    })?;
    report.layers = rows;
    Ok(report)
}

/// Speakers used to extend the global model's coverage: `n` per attacked
/// value, from seed streams no scenario speaker uses.
fn defense_corpus(cfg: &ScenarioConfig, samples_per_value: &[usize]) -> Vec<SyntheticSpeaker> {
    let attr = cfg.attribute.index() as u64;
    let mut corpus = Vec::new();
    for (&v, &n) in cfg.class_values.iter().zip(samples_per_value) {
        for i in 0..n {
            let path = [attr, v as u64, i as u64];
            let mut rng = SplitMix64::derive(
                cfg.master_seed,
                &[STREAM_DEFENSE_PROFILE, path[0], path[1], path[2]],
            );
            corpus.push(SyntheticSpeaker {
                speaker_id: format!("defense-{}={v}-{i:03}", cfg.attribute),
                profile: random_profile(cfg, v, &mut rng),
                seed: derive_seed(
                    cfg.master_seed,
                    &[STREAM_DEFENSE_SPEAKER, path[0], path[1], path[2]],
                ),
            });
        }
    }
    // interleave classes so continued training never sees long single-class runs
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    SplitMix64::derive(cfg.master_seed, &[STREAM_DEFENSE_SPEAKER, u64::MAX]).shuffle(&mut order);
    order.into_iter().map(|i| corpus[i].clone()).collect()
}

/// Continues training `global` on the defense corpus. Returns the defended
/// model and the number of steps taken.
fn defended_global(
    cfg: &ScenarioConfig,
    world: &World,
    global: &WeightSnapshot,
) -> Result<(WeightSnapshot, Vec<usize>, usize), ExperimentError> {
    let defense = cfg.defense.clone().unwrap_or_default();
    let counts: Vec<usize> = cfg
        .class_values
        .iter()
        .map(|&v| defense.samples_for(v))
        .collect();
    let corpus = defense_corpus(cfg, &counts);
    if corpus.is_empty() {
        return Ok((global.clone(), counts, 0));
    }
    let schedule = defense
        .training
        .clone()
        .unwrap_or_else(|| cfg.pretrain.train.clone());
    let start = TinyModel::from_snapshot(global)?;
    let trained = continue_training(&start, world, &schedule, &corpus)?;
    Ok((trained.to_snapshot("global-defended"), counts, schedule.steps))
}

/// Attack before and after extending the global model's coverage with
/// `defense_samples_per_class` fresh speakers of every attacked value.
/// Shadow and target speakers are identical in both phases; only the model
/// they personalize from changes.
pub fn run_defense_experiment(
    cfg: &ScenarioConfig,
    defense_samples_per_class: usize,
    opts: &RunOptions,
) -> Result<DefenseOutcome, ExperimentError> {
    let mut cfg = cfg.clone();
    let mut defense = cfg.defense.take().unwrap_or_default();
    defense.samples_per_class = defense_samples_per_class;
    cfg.defense = Some(defense);

    let (world, global) = setup(&cfg)?;
    let plan = ClassPlan::from_config(&cfg);
    let kind = ReportKind::Defense;
    let mut before = run_against(
        &cfg,
        kind,
        &plan,
        &world,
        &global,
        opts,
        cfg.pretrain.train.steps,
        0,
    )?;
    let (defended, counts, defense_steps) = defended_global(&cfg, &world, &global)?;
    let mut after = run_against(
        &cfg,
        kind,
        &plan,
        &world,
        &defended,
        opts,
        cfg.pretrain.train.steps + defense_steps,
        defense_steps,
    )?;
    // before-phase opts.snapshot_dir is overwritten by the after phase;
    // the after phase is the one worth inspecting offline.
    let speakers: usize = counts.iter().sum();
    before.defense = Some(DefenseBlock {
        phase: "before".into(),
        samples_per_class: counts.clone(),
        defense_speakers: speakers,
    });
    after.defense = Some(DefenseBlock {
        phase: "after".into(),
        samples_per_class: counts,
        defense_speakers: speakers,
    });
    let per_class = before
        .per_class
        .iter()
        .zip(&after.per_class)
        .map(|(b, a)| ClassDelta {
            class: b.class.clone(),
            accuracy_before: b.recall,
            accuracy_after: a.recall,
            delta: a.recall - b.recall,
        })
        .collect();
    Ok(DefenseOutcome {
        mean_accuracy_delta: after.accuracy.mean - before.accuracy.mean,
        before,
        after,
        per_class,
    })
}

/// Attack on attribute values the global model never saw, with few shadows
/// per value. Uses the defended global model when the scenario carries a
/// defense block with at least one sample.
pub fn run_unseen_class_experiment(
    cfg: &ScenarioConfig,
    unseen_values: &[usize],
    shadow_per_unseen: usize,
    test_per_unseen: usize,
    opts: &RunOptions,
) -> Result<ReportDocument, ExperimentError> {
    let bad = |m: String| Err(ExperimentError::Config(m));
    let attr: Attribute = cfg.attribute;
    let card = *cfg.world.cardinalities.get(attr);
    if unseen_values.len() < 2 {
        return bad(format!("need at least 2 unseen values, got {}", unseen_values.len()));
    }
    if shadow_per_unseen == 0 || test_per_unseen == 0 {
        return bad("unseen experiment needs shadows and tests per class".into());
    }
    let defended = cfg
        .defense
        .as_ref()
        .is_some_and(|d| cfg.class_values.iter().any(|&v| d.samples_for(v) > 0));
    for (i, &v) in unseen_values.iter().enumerate() {
        if v >= card {
            return bad(format!("unseen value {v} exceeds {attr} cardinality {card}"));
        }
        if unseen_values[..i].contains(&v) {
            return bad(format!("unseen value {v} listed twice"));
        }
        if cfg.world.covers(attr, v) {
            return bad(format!("unseen value {v} is covered by pre-training"));
        }
        if defended && cfg.class_values.contains(&v) {
            return bad(format!("unseen value {v} is used by the defense corpus"));
        }
    }
    let (world, global) = setup(cfg)?;
    let (global, defense_steps) = if defended {
        let (g, _, steps) = defended_global(cfg, &world, &global)?;
        (g, steps)
    } else {
        (global, 0)
    };
    let k = unseen_values.len();
    let mut run_cfg = cfg.clone();
    run_cfg.class_values = unseen_values.to_vec();
    run_cfg.class_names = None;
    run_cfg.shadow_counts = vec![shadow_per_unseen; k];
    run_cfg.test_counts = vec![test_per_unseen; k];
    run_cfg.split = SplitPlan {
        scheme: SplitScheme::Designated,
        seed: cfg.split.seed,
    };
    run_cfg.defense = None;
    let plan = ClassPlan::from_config(&run_cfg);
    let mut report = run_against(
        &run_cfg,
        ReportKind::Unseen,
        &plan,
        &world,
        &global,
        opts,
        cfg.pretrain.train.steps + defense_steps,
        defense_steps,
    )?;
    report.scenario = cfg.clone();
    report.unseen = Some(UnseenBlock {
        values: unseen_values.to_vec(),
        shadows_per_class: shadow_per_unseen,
        tests_per_class: test_per_unseen,
        defended_global: defended,
    });
    Ok(report)
}
