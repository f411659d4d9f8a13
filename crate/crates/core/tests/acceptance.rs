//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use fedleak_core::centroid::CentroidModel;
use fedleak_core::eval::{make_splits, summarize_folds, SampleMeta, SampleRole, SplitPlan, SplitScheme};
use fedleak_core::experiment::{
    report_to_json, run_defense_experiment, run_multiclass_scenario, run_scenario, RunOptions,
    ScenarioConfig,
};
use fedleak_core::features::{
    extract_features, summarize_values, FeatureMode, FeatureVector, LayerSelector,
};
use fedleak_core::rng::SplitMix64;
use fedleak_core::sim::{TinyModel, Utterance};
use fedleak_core::snapshot::{TensorRecord, WeightSnapshot};
use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn bundled(name: &str) -> ScenarioConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    ScenarioConfig::load(p).unwrap()
}

fn with_seed(mut cfg: ScenarioConfig, seed: u64) -> ScenarioConfig {
    cfg.master_seed = seed;
    cfg
}

fn serial() -> RunOptions {
    RunOptions::with_workers(1)
}

// ---------------------------------------------------------------- distance

/// Normalized distance written out independently: norms via hypot-style
/// scaling so no shared code path with the library.
fn oracle_distance(z: &[f64], c: &[f64]) -> f64 {
    let scaled_norm = |v: &[f64]| {
        let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
    };
    let diff: Vec<f64> = z.iter().zip(c).map(|(a, b)| a - b).collect();
    scaled_norm(&diff) / (scaled_norm(z) * scaled_norm(c))
}

fn distance_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xD15_7A9CE);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = 2 + rng.below(9);
        let d = 1 + rng.below(64);
        let scale = 10f64.powi(rng.below(7) as i32 - 3);
        let samples: Vec<(FeatureVector, String)> = (0..k * (1 + rng.below(4)))
            .map(|i| {
                let v = (0..d).map(|_| scale * rng.uniform(-1.0, 1.0)).collect();
                (FeatureVector::from_values(v), format!("c{}", i % k))
            })
            .collect();
        let model = CentroidModel::fit(&samples).unwrap();
        let z: Vec<f64> = (0..d).map(|_| scale * rng.uniform(-1.0, 1.0)).collect();
        let p = model.predict(&FeatureVector::from_values(z.clone())).unwrap();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let cv = model.centroid(c).values;
            let od = oracle_distance(&z, &cv);
            worst = worst.max((od - p.distances[c]).abs() / od);
            if od < best_d {
                best_d = od;
                best = c;
            }
        }
        if best != p.class_index {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && worst <= 1e-12 && secs < 10.0,
        format!("1000 instances, argmin mismatches {mismatches}, max rel err {worst:.2e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- features

/// Exact value of a finite f64 as an integer multiple of 2^-1074.
fn exact(x: f64) -> BigInt {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    BigInt::from(sign) * (BigInt::from(mant) << (e + 1074) as usize)
}

/// num / den rounded to f64 (den > 0), with about 80 bits of quotient.
fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = 80i64 + den.bits() as i64 - num.magnitude().bits() as i64;
    let q = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        num / (den << (-shift) as usize)
    };
    let mut v = q.to_f64().unwrap();
    let mut s = shift;
    while s > 0 {
        let step = s.min(1000);
        v /= 2f64.powi(step as i32);
        s -= step;
    }
    while s < 0 {
        let step = (-s).min(1000);
        v *= 2f64.powi(step as i32);
        s += step;
    }
    v
}

fn oracle_stats(xs: &[f64]) -> [f64; 4] {
    let n = BigInt::from(xs.len());
    let unit = BigInt::from(1) << 1074usize;
    let vals: Vec<BigInt> = xs.iter().map(|&x| exact(x)).collect();
    let sum: BigInt = vals.iter().sum();
    let sum_sq: BigInt = vals.iter().map(|v| v * v).sum();
    let mean = ratio_to_f64(&sum, &(&n * &unit));
    // var = (n * sum_sq - sum^2) / (n^2 * unit^2)
    let var_num = &n * &sum_sq - &sum * &sum;
    let var = ratio_to_f64(&var_num, &(&n * &n * &unit * &unit));
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, var.sqrt(), min, max]
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn feature_oracle() -> Outcome {
    let mut rng = SplitMix64::new(0xFEA7);
    let mut sizes: Vec<usize> = vec![1, 2, 3, 100_000];
    for _ in 0..36 {
        sizes.push(10f64.powf(rng.uniform(0.0, 5.0)).round().max(1.0) as usize);
    }
    let mut worst = 0.0f64;
    for (i, &n) in sizes.iter().enumerate() {
        let xs: Vec<f64> = match i % 4 {
            0 => (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            1 => (0..n).map(|_| 1e6 + 1e-3 * rng.gaussian()).collect(),
            2 => (0..n).map(|_| rng.gaussian() * 10f64.powi(rng.below(9) as i32 - 4)).collect(),
            _ => (0..n).map(|_| -0.05 + 0.1 * rng.next_f64()).collect(),
        };
        let got = summarize_values(&xs).unwrap().to_array();
        let want = oracle_stats(&xs);
        for s in 0..4 {
            // a single-element std is exactly 0 on both sides
            if want[s] == 0.0 {
                if got[s] != 0.0 {
                    worst = f64::INFINITY;
                }
                continue;
            }
            worst = worst.max(rel_err(got[s], want[s]));
        }
    }

    let mut dims_ok = true;
    for a in 0..100 {
        let count = if a == 0 { 479 } else { 1 + rng.below(40) };
        let tensors = (0..count)
            .map(|t| {
                let numel = 1 + rng.below(6);
                TensorRecord::new(
                    format!("layer{t:04}.w"),
                    vec![numel],
                    (0..numel).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                )
                .unwrap()
            })
            .collect();
        let s = WeightSnapshot::new("arch", tensors).unwrap();
        let z = extract_features(&s, &LayerSelector::All, FeatureMode::RawWeights).unwrap();
        dims_ok &= z.dim() == 4 * count;
        if count == 479 {
            dims_ok &= z.dim() == 1916;
        }
    }
    outcome(
        worst <= 1e-12 && dims_ok,
        format!(
            "{} tensors of 1..1e5 values, max rel err {worst:.2e}; d = 4 x tensors over 100 architectures incl. 479 -> 1916: {dims_ok}",
            sizes.len()
        ),
    )
}

// ---------------------------------------------------------------- gradient

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0x6AD);
    let mut worst = 0.0f64;
    let mut step_ok = true;
    for inst in 0..50 {
        let (d, h, v, t) = (1 + rng.below(5), 1 + rng.below(6), 2 + rng.below(4), 1 + rng.below(6));
        let m = TinyModel::init(d, h, v, inst);
        let u = Utterance {
            frames: (0..t * d).map(|_| rng.gaussian()).collect(),
            dim: d,
            tokens: (0..t).map(|_| rng.below(v)).collect(),
        };
        let (_, g) = m.loss_and_gradient(&u).unwrap();
        let theta = m.flat();
        let grad = g.flat();
        let eps = 1e-5;
        for i in 0..theta.len() {
            let mut p = theta.clone();
            p[i] += eps;
            let lp = m.with_flat(&p).forward_loss(&u).unwrap();
            p[i] -= 2.0 * eps;
            let lm = m.with_flat(&p).forward_loss(&u).unwrap();
            worst = worst.max(((lp - lm) / (2.0 * eps) - grad[i]).abs());
        }
        let lr = 0.1;
        let stepped = m.train_step(&u, lr).unwrap().flat();
        step_ok &= stepped
            .iter()
            .zip(theta.iter().zip(&grad))
            .all(|(s, (w, g))| *s == w - lr * g);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && step_ok && secs < 30.0,
        format!("50 instances, max |fd - analytic| {worst:.2e}, step uses gradient: {step_ok}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- CV

fn metas(classes: &[usize], speakers: impl Fn(usize) -> String) -> Vec<SampleMeta> {
    classes
        .iter()
        .enumerate()
        .map(|(i, &c)| SampleMeta {
            class: c,
            speaker: speakers(i),
            role: SampleRole::Shadow,
        })
        .collect()
}

fn cv_machinery() -> Outcome {
    let six = make_splits(
        &metas(&(0..48).map(|i| i % 2).collect::<Vec<_>>(), |i| format!("s{i}")),
        &SplitPlan {
            scheme: SplitScheme::KFold { k: 6, stratified: true },
            seed: 1,
        },
    )
    .unwrap();
    let six_ok = six.len() == 6 && six.iter().all(|s| s.test.len() == 8 && s.train.len() == 40);

    let loso = make_splits(
        &metas(&(0..150).map(|i| usize::from(i / 10 < 8)).collect::<Vec<_>>(), |i| {
            format!("spk{}", i / 10)
        }),
        &SplitPlan {
            scheme: SplitScheme::LeaveOneSpeakerOut,
            seed: 1,
        },
    )
    .unwrap();
    let loso_ok = loso.len() == 15;

    let hold_meta = metas(&(0..200).map(|i| i / 100).collect::<Vec<_>>(), |i| format!("s{i}"));
    let hold = make_splits(
        &hold_meta,
        &SplitPlan {
            scheme: SplitScheme::Holdout {
                train_fraction: 0.75,
                stratified: true,
            },
            seed: 1,
        },
    )
    .unwrap();
    let count = |idx: &[usize], c: usize| idx.iter().filter(|&&i| hold_meta[i].class == c).count();
    let hold_ok = hold.len() == 1
        && count(&hold[0].train, 0) == 75
        && count(&hold[0].train, 1) == 75
        && count(&hold[0].test, 0) == 25
        && count(&hold[0].test, 1) == 25;

    let ci = summarize_folds(&[0.6, 0.7, 0.8, 0.9, 1.0], 0.95).unwrap();
    let ci_ok = (ci.mean - 0.8).abs() < 1e-3
        && (ci.ci_low - 0.6037).abs() < 1e-3
        && (ci.ci_high - 0.9963).abs() < 1e-3
        && ci.dof == 4;
    outcome(
        six_ok && loso_ok && hold_ok && ci_ok,
        format!(
            "6-fold/48 -> 8 per fold: {six_ok}; LOSO/15 speakers -> {} folds; 75/25 over 100+100: {hold_ok}; CI [{:.4}, {:.4}] dof {}",
            loso.len(),
            ci.ci_low,
            ci.ci_high,
            ci.dof
        ),
    )
}

// ---------------------------------------------------------------- scenarios

fn list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn uncovered_leakage() -> Outcome {
    let cfg = bundled("accent-analog");
    let mut accs = Vec::new();
    let mut slowest = 0.0f64;
    for s in SEEDS {
        let start = Instant::now();
        accs.push(run_scenario(&with_seed(cfg.clone(), s), &serial()).unwrap().accuracy.mean);
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }
    let min = accs.iter().copied().fold(1.0, f64::min);
    outcome(
        min >= 0.90 && slowest < 300.0,
        format!("accent-analog seeds 1-5: {}; min {min:.3}; slowest run {slowest:.2}s single-threaded", list(&accs)),
    )
}

fn covered_null() -> Outcome {
    let cfg = bundled("gender-analog");
    let accs: Vec<f64> = SEEDS
        .iter()
        .map(|&s| run_scenario(&with_seed(cfg.clone(), s), &serial()).unwrap().accuracy.mean)
        .collect();
    let m = mean(&accs);
    outcome(
        (0.35..=0.65).contains(&m),
        format!("gender-analog seeds 1-5: {}; mean {m:.3}", list(&accs)),
    )
}

fn defense_effect() -> Outcome {
    let cfg = bundled("accent-analog");
    let mut before = Vec::new();
    let mut after = Vec::new();
    for s in SEEDS {
        let d = run_defense_experiment(&with_seed(cfg.clone(), s), 20, &serial()).unwrap();
        before.push(d.before.accuracy.mean);
        after.push(d.after.accuracy.mean);
    }
    let drops: Vec<f64> = before.iter().zip(&after).map(|(b, a)| b - a).collect();
    let drop = mean(&before) - mean(&after);
    outcome(
        drop >= 0.25,
        format!(
            "20 defense samples/class; before mean {:.3}, after mean {:.3}, drop {drop:.3}; per-seed drops {}",
            mean(&before),
            mean(&after),
            list(&drops)
        ),
    )
}

fn multiclass_train_only() -> Outcome {
    let cfg = bundled("multiclass-accent");
    let r = run_multiclass_scenario(&cfg, &serial()).unwrap();
    let k = r.classes.len();
    let shape_ok = k == 11 && r.confusion_proportions.iter().all(|row| row.len() == 11);
    let train_only_ok = r.train_only_classes.len() == 1
        && r.confusion[10].iter().sum::<usize>() == 0
        && r.per_class[10].support == 0;
    let diag_ok = (0..k).all(|c| r.confusion_proportions[c][c] == r.per_class[c].precision);
    let tested: Vec<f64> = r.per_class[..10].iter().map(|m| m.precision).collect();
    outcome(
        shape_ok && train_only_ok && diag_ok,
        format!(
            "11 columns: {shape_ok}; train-only class has no test row: {train_only_ok}; diagonal == precision: {diag_ok}; accuracy {:.3}, tested-class precision {}",
            r.accuracy.mean,
            list(&tested)
        ),
    )
}

fn determinism() -> Outcome {
    let mut same = true;
    let mut checked = Vec::new();
    for name in ["accent-analog", "dysarthria-analog", "emotion-analog"] {
        let cfg = bundled(name);
        let a = report_to_json(&run_scenario(&cfg, &serial()).unwrap());
        let b = report_to_json(&run_scenario(&cfg, &serial()).unwrap());
        let c = report_to_json(&run_scenario(&cfg, &RunOptions::with_workers(4)).unwrap());
        let d = report_to_json(&run_scenario(&cfg, &RunOptions::with_workers(0)).unwrap());
        same &= a == b && a == c && a == d;
        checked.push(name);
    }
    outcome(
        same,
        format!("{} run twice and with 1/4/all workers: byte-identical JSON {same}", checked.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("normalized distance and argmin oracle", distance_oracle),
        ("feature statistics oracle and dimension", feature_oracle),
        ("gradient check", gradient_check),
        ("cross-validation machinery", cv_machinery),
        ("uncovered-attribute leakage", uncovered_leakage),
        ("covered-attribute null", covered_null),
        ("coverage defense", defense_effect),
        ("multi-class with train-only class", multiclass_train_only),
        ("determinism across workers", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
