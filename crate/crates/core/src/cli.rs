//! Command-line front end. `saae <command> --help` lists the flags.
//!
//! Every command is non-interactive, writes only under its `--out` path and
//! reports failures as one line, `error[CODE]: message`, with a nonzero
//! exit status.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::save_checkpoint;
use crate::datasets::{
    holdout_split, load_windows, loso_splits, DatasetSpec, Fold, SynthConfig, WindowCache, BUILTIN_DATASETS,
    DEFAULT_OVERLAP, DEFAULT_WINDOW_LEN,
};
use crate::error::{Error, Result};
use crate::evaluation::{curve_extract, pca_2d, read_embeddings, MetricsReport, SubjectReport};
use crate::network::{Architecture, ModelMeta};
use crate::plot::{render_confusion, render_curve, render_scatter, save_png};
use crate::training::{equivalence_check, TrainConfig, TrainHistory, Trainer, HISTORY_KEYS};

#[derive(Debug, Parser)]
#[command(name = "saae", version, about = "Spectrum-guided adversarial autoencoder experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw dataset into a binary window cache.
    Prepare(PrepareArgs),
    /// Train on every subject but one and evaluate on the held-out subject.
    Train(TrainArgs),
    /// Run every leave-one-subject-out fold and summarize.
    Loso(LosoArgs),
    /// Write a synthetic window cache.
    Synth(SynthArgs),
    /// Render training curves and confusion matrices.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_DATASETS))]
    pub dataset: String,
    #[arg(long, env = "SAAE_DATA_ROOT")]
    pub root: PathBuf,
    /// Cache file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Column map overriding the built-in one.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
    pub window_len: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Flat JSON with any training-configuration fields; missing ones take
    /// their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train the unguided ablation (all weights 1).
    #[arg(long)]
    pub no_spectrum: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub hold_out_subject: u32,
    /// Also verify that a guide pinned to 1 reproduces the unguided run
    /// bit for bit over this many iterations.
    #[arg(long, value_name = "STEPS")]
    pub check_equivalence: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Train folds concurrently.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Flat JSON with synthetic-corpus fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Series to plot; defaults to all of them.
    #[arg(long, value_delimiter = ',')]
    pub keys: Vec<String>,
    /// `report.json` from a loso run, for confusion-matrix heatmaps.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Embedding export to project and scatter by label.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub smoothing: usize,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Loso(a) => cmd_loso(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Plot(a) => cmd_plot(&a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn print_counts(cache: &WindowCache) {
    let counts = cache.counts();
    let classes: std::collections::BTreeSet<u32> = counts.values().flat_map(|m| m.keys().copied()).collect();
    println!(
        "{}: {} windows of {} x {}, {} subjects, {} classes",
        cache.name,
        cache.windows.len(),
        cache.window_len,
        cache.channels,
        counts.len(),
        classes.len()
    );
    for (subject, per_class) in &counts {
        let parts: Vec<String> = per_class.iter().map(|(c, n)| format!("{c}:{n}")).collect();
        println!("  subject {subject}: {}", parts.join(" "));
    }
}

pub fn cmd_prepare(a: &PrepareArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => DatasetSpec::load(p)?,
        None => DatasetSpec::builtin(&a.dataset)?,
    };
    let windows = load_windows(&a.dataset, &a.root, Some(&spec), a.window_len, a.overlap)?;
    if windows.is_empty() {
        return Err(Error::Data(format!("no complete windows of length {} found", a.window_len)));
    }
    let cache = WindowCache::new(spec.name.clone(), spec.classes, windows)?;
    cache.save(&a.out)?;
    print_counts(&cache);
    println!("digest {}", cache.digest());
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg: SynthConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => SynthConfig::default(),
    };
    let cache = WindowCache::new("synthetic", cfg.classes, cfg.generate()?)?;
    cache.save(&a.out)?;
    print_counts(&cache);
    println!("digest {}", cache.digest());
    Ok(())
}

/// Configuration file values with command-line overrides applied.
pub fn effective_config(run: &RunArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &run.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    if run.no_spectrum {
        cfg.spectrum_enabled = false;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains one fold and writes its checkpoint, history and metrics to `dir`.
pub fn run_fold(fold: &Fold, cache: &WindowCache, config: &TrainConfig, dir: &Path) -> Result<SubjectReport> {
    fs::create_dir_all(dir)?;
    let meta = ModelMeta::new(cache.window_len, cache.channels, cache.classes, Architecture::standard())?;
    let mut trainer = Trainer::new(meta, config.clone())?;
    trainer.fit(&fold.train)?;
    let test: Vec<&crate::datasets::SignalWindow> = fold.test.iter().collect();
    let preds = trainer.model.predict(&test)?;
    let labels: Vec<u32> = fold.test.iter().map(|w| w.label).collect();
    let report = SubjectReport::new(fold.subject, &preds, &labels, cache.classes)?;
    save_checkpoint(&trainer.model, &trainer.guide, &dir.join("checkpoint.saae"))?;
    trainer.history.save(&dir.join("history.jsonl"))?;
    write_json(&dir.join("metrics.json"), &report)?;
    Ok(report)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let config = effective_config(&a.run)?;
    let cache = WindowCache::load(&a.run.cache)?;
    let fold = holdout_split(&cache.windows, a.hold_out_subject)?;
    fs::create_dir_all(&a.run.out)?;
    write_json(&a.run.out.join("config.json"), &config)?;
    if let Some(steps) = a.check_equivalence {
        let meta = ModelMeta::new(cache.window_len, cache.channels, cache.classes, Architecture::standard())?;
        if !equivalence_check(&fold.train, meta, &config, steps)? {
            return Err(Error::Data(format!(
                "equivalence self-check failed: pinned guide diverged from the unguided run within {steps} iterations"
            )));
        }
        println!("equivalence self-check passed ({steps} iterations)");
    }
    let report = run_fold(&fold, &cache, &config, &a.run.out)?;
    let m = report.metrics;
    println!(
        "subject {}: accuracy {:.3} precision {:.3} f1 {:.3}",
        report.subject, m.accuracy, m.precision, m.f1
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct FoldFailure {
    subject: u32,
    code: &'static str,
    message: String,
}

pub fn cmd_loso(a: &LosoArgs) -> Result<()> {
    let config = effective_config(&a.run)?;
    let cache = WindowCache::load(&a.run.cache)?;
    fs::create_dir_all(&a.run.out)?;
    write_json(&a.run.out.join("config.json"), &config)?;
    let subjects = crate::datasets::subjects(&cache.windows);
    let fold_dir = |s: u32| a.run.out.join(format!("fold_{s}"));
    let outcomes: Vec<(u32, Result<SubjectReport>)> = if a.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = subjects
                .iter()
                .map(|&s| {
                    let (cache, config, dir) = (&cache, &config, fold_dir(s));
                    scope.spawn(move || {
                        let r = holdout_split(&cache.windows, s).and_then(|f| run_fold(&f, cache, config, &dir));
                        (s, r)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
        })
    } else {
        loso_splits(&cache.windows)?
            .zip(&subjects)
            .map(|(fold, &s)| (s, fold.and_then(|f| run_fold(&f, &cache, &config, &fold_dir(s)))))
            .collect()
    };
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (subject, r) in outcomes {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                eprintln!("fold {subject} failed: error[{}]: {e}", e.code());
                failures.push(FoldFailure {
                    subject,
                    code: e.code(),
                    message: e.to_string(),
                });
            }
        }
    }
    write_json(&a.run.out.join("failures.json"), &failures)?;
    if reports.is_empty() {
        return Err(Error::Data("every fold failed; see failures.json".into()));
    }
    let report = MetricsReport::new(reports)?;
    fs::write(a.run.out.join("report.csv"), report.to_csv())?;
    fs::write(a.run.out.join("report.txt"), report.to_table())?;
    write_json(&a.run.out.join("report.json"), &report)?;
    print!("{}", report.to_table());
    if !failures.is_empty() {
        return Err(Error::Data(format!(
            "{} of {} folds failed; partial results kept, see failures.json",
            failures.len(),
            subjects.len()
        )));
    }
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let history = TrainHistory::load(&a.history)?;
    let keys: Vec<&str> = if a.keys.is_empty() {
        HISTORY_KEYS.to_vec()
    } else {
        a.keys.iter().map(String::as_str).collect()
    };
    let curves = curve_extract(&history, &keys, a.smoothing)?;
    fs::create_dir_all(&a.out)?;
    for c in &curves {
        save_png(&render_curve(c), &a.out.join(format!("{}.png", c.key)))?;
    }
    if let Some(path) = &a.report {
        let report: MetricsReport = serde_json::from_str(&fs::read_to_string(path)?)?;
        for s in &report.subjects {
            save_png(
                &render_confusion(&s.confusion)?,
                &a.out.join(format!("confusion_subject{}.png", s.subject)),
            )?;
        }
    }
    if let Some(path) = &a.embeddings {
        let records = read_embeddings(&fs::read_to_string(path)?)?;
        let rows: Vec<Vec<f64>> = records.iter().map(|r| r.gamma.clone()).collect();
        let labels: Vec<u32> = records.iter().map(|r| r.label).collect();
        save_png(&render_scatter(&pca_2d(&rows)?, &labels)?, &a.out.join("embeddings.png"))?;
    }
    Ok(())
}
