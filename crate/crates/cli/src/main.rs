use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fedleak_core::experiment::offline::{run_offline_attack, OfflineAttack};
use fedleak_core::experiment::{
    emit_report, run_defense_experiment, run_layer_sweep, run_scenario,
    run_unseen_class_experiment, ExperimentError, FeatureModeTag, ReportDocument, ReportFormat,
    RunOptions, ScenarioConfig,
};
use fedleak_core::features::LayerSelector;

#[derive(Parser)]
#[command(name = "fedleak", version, about = "Attribute inference from personalized model weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a binary or multi-class scenario.
    Run(RunArgs),
    /// Attack each tensor on its own, plus the all-tensor baseline.
    SweepLayers(RunArgs),
    /// Attack before and after extending pre-training coverage.
    Defense {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        defense_samples: usize,
    },
    /// Attack attribute values that pre-training never saw.
    Unseen {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated attribute values.
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<usize>,
        #[arg(long)]
        shadows: usize,
        #[arg(long)]
        tests: usize,
    },
    /// Classify one exported snapshot against labeled shadow snapshots.
    Attack(AttackArgs),
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: String,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "FEDLEAK_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Also write the global and personalized models as .fsnp files.
    #[arg(long)]
    emit_snapshots: bool,
}

#[derive(Args)]
struct AttackArgs {
    /// Global model; required for --delta.
    #[arg(long)]
    global: Option<PathBuf>,
    /// Directory the labels file paths are relative to.
    #[arg(long)]
    shadows: PathBuf,
    /// CSV with header `path,label`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Use statistics of (model - global) instead of raw weights.
    #[arg(long)]
    delta: bool,
    /// Restrict features to tensors whose name starts with this prefix.
    #[arg(long)]
    prefix: Option<String>,
}

struct Prepared {
    cfg: ScenarioConfig,
    format: ReportFormat,
    opts: RunOptions,
    out: PathBuf,
}

impl RunArgs {
    fn prepare(&self) -> Result<Prepared, ExperimentError> {
        let format: ReportFormat = self.format.parse()?;
        let cfg = ScenarioConfig::load(&self.scenario)?;
        std::fs::create_dir_all(&self.out)
            .map_err(|e| ExperimentError::Io(format!("{}: {e}", self.out.display())))?;
        let snapshot_dir = self
            .emit_snapshots
            .then(|| self.out.join(format!("{}-snapshots", cfg.name)));
        Ok(Prepared {
            cfg,
            format,
            opts: RunOptions {
                workers: self.workers,
                snapshot_dir,
            },
            out: self.out.clone(),
        })
    }
}

impl Prepared {
    fn report_path(&self, stem: &str) -> PathBuf {
        let ext = match self.format {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        };
        self.out.join(format!("{stem}.{ext}"))
    }

    fn emit(&self, r: &ReportDocument, stem: &str) -> Result<(), ExperimentError> {
        for p in emit_report(r, self.report_path(stem), self.format)? {
            println!("wrote {}", p.display());
        }
        Ok(())
    }

    /// Wall-clock time lives beside the report so the report stays
    /// byte-identical across runs.
    fn write_runtime(&self, stem: &str, started: Instant) -> Result<(), ExperimentError> {
        let body = serde_json::json!({
            "scenario": self.cfg.name,
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
            "workers": self.opts.workers,
        });
        write_text(
            &self.out.join(format!("{stem}.runtime.json")),
            &format!("{}\n", serde_json::to_string_pretty(&body).unwrap()),
        )
    }
}

fn write_text(path: &Path, body: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, body).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}

fn summary_line(r: &ReportDocument) -> String {
    let a = &r.accuracy;
    format!(
        "{}: accuracy {:.4} (95% CI {:.4}..{:.4}, {} folds)",
        r.scenario.name,
        a.mean,
        a.ci_low,
        a.ci_high,
        r.folds.len()
    )
}

fn execute(cmd: Command) -> Result<(), ExperimentError> {
    let started = Instant::now();
    match cmd {
        Command::Run(args) => {
            let p = args.prepare()?;
            let r = run_scenario(&p.cfg, &p.opts)?;
            let stem = p.cfg.name.clone();
            p.emit(&r, &stem)?;
            p.write_runtime(&stem, started)?;
            println!("{}", summary_line(&r));
        }
        Command::SweepLayers(args) => {
            let p = args.prepare()?;
            let r = run_layer_sweep(&p.cfg, &p.opts)?;
            let stem = format!("{}.layers", p.cfg.name);
            p.emit(&r, &stem)?;
            p.write_runtime(&stem, started)?;
            for row in &r.layers {
                println!("{:>16}  d={:<3} accuracy {:.4}", row.selector, row.dim, row.summary.mean);
            }
        }
        Command::Defense {
            run,
            defense_samples,
        } => {
            let p = run.prepare()?;
            let d = run_defense_experiment(&p.cfg, defense_samples, &p.opts)?;
            let stem = format!("{}.defense", p.cfg.name);
            p.emit(&d.before, &format!("{stem}.before"))?;
            p.emit(&d.after, &format!("{stem}.after"))?;
            let deltas = serde_json::json!({
                "mean_accuracy_delta": d.mean_accuracy_delta,
                "per_class": d.per_class,
            });
            let path = p.out.join(format!("{stem}.deltas.json"));
            write_text(&path, &format!("{}\n", serde_json::to_string_pretty(&deltas).unwrap()))?;
            println!("wrote {}", path.display());
            p.write_runtime(&stem, started)?;
            println!(
                "before {:.4}  after {:.4}  delta {:+.4}",
                d.before.accuracy.mean, d.after.accuracy.mean, d.mean_accuracy_delta
            );
        }
        Command::Unseen {
            run,
            classes,
            shadows,
            tests,
        } => {
            let p = run.prepare()?;
            let r = run_unseen_class_experiment(&p.cfg, &classes, shadows, tests, &p.opts)?;
            let stem = format!("{}.unseen", p.cfg.name);
            p.emit(&r, &stem)?;
            p.write_runtime(&stem, started)?;
            println!("{:>16} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1");
            for m in &r.per_class {
                println!("{:>16} {:>9.4} {:>9.4} {:>9.4}", m.class, m.precision, m.recall, m.f1);
            }
        }
        Command::Attack(a) => {
            let job = OfflineAttack {
                global: a.global,
                shadow_dir: a.shadows,
                labels: a.labels,
                target: a.target,
                mode: if a.delta {
                    FeatureModeTag::Delta
                } else {
                    FeatureModeTag::RawWeights
                },
                selector: match a.prefix {
                    Some(p) => LayerSelector::NamePrefix(p),
                    None => LayerSelector::All,
                },
            };
            let v = run_offline_attack(&job)?;
            println!("{}", serde_json::to_string_pretty(&v).unwrap());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
