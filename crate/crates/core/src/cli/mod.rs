//! Command-line front end. [`run`] parses arguments, executes a subcommand,
//! writes its manifest, and returns the process exit code.

pub mod commands;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::pipeline::PipelineError;
use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "genrekit", version, about = "Genre classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus as JSONL.
    GenSynthetic(GenArgs),
    /// Train logistic regression and both surrogates for every seed.
    Train(Common),
    /// Tune ensemble weights on the validation split.
    TuneEnsemble(Common),
    /// Per-genre F1 with seed spread, confusion pairs, predicted distributions.
    Evaluate(Common),
    /// Monte-Carlo dropout confidence, Mann-Whitney report, rejection sweep.
    Confide(Common),
    /// Chi-squared comparison of two `label,count` files.
    CompareDist(CompareArgs),
    /// Accuracy against training-set fraction.
    LearningCurve(Common),
    /// Train and validation accuracy per epoch.
    EpochSweep(Common),
}

/// Options shared by the config-driven commands. Flags override keys of
/// the config file.
#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set mlp.epochs=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Training corpus (replaces `train_paths`). Repeatable.
    #[arg(long = "train")]
    train: Vec<PathBuf>,
    /// Test corpus (replaces `test_paths`). Repeatable.
    #[arg(long = "test")]
    test: Vec<PathBuf>,
    /// Unlabeled corpus (replaces `unlabeled_paths`). Repeatable.
    #[arg(long = "unlabeled")]
    unlabeled: Vec<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output JSONL path.
    #[arg(short, long)]
    out: PathBuf,
    /// Reads the `[synthetic]` table of this config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    docs_per_class: Option<usize>,
    #[arg(long)]
    vocab_per_class: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(short, long, default_value = ".")]
    output_dir: PathBuf,
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn path_list(paths: &[PathBuf]) -> String {
    toml::Value::Array(
        paths
            .iter()
            .map(|p| toml::Value::String(absolute(p).display().to_string()))
            .collect(),
    )
    .to_string()
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, PipelineError> {
        let mut overrides = self.set.clone();
        if let Some(o) = &self.output_dir {
            overrides.push(format!("output_dir={}", toml::Value::String(absolute(o).display().to_string())));
        }
        for (key, paths) in [("train_paths", &self.train), ("test_paths", &self.test), ("unlabeled_paths", &self.unlabeled)] {
            if !paths.is_empty() {
                overrides.push(format!("{key}={}", path_list(paths)));
            }
        }
        if !self.seeds.is_empty() {
            let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            overrides.push(format!("seeds=[{}]", seeds.join(",")));
        }
        let cfg = ExperimentConfig::load(self.config.as_deref(), &overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

type CommandFn = fn(&ExperimentConfig, &mut Outputs) -> Result<(), PipelineError>;

fn with_config(common: &Common, name: &str, report: &str, f: CommandFn) -> Result<(), PipelineError> {
    let start = Instant::now();
    let cfg = common.resolve()?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    f(&cfg, &mut out)?;
    let text_path = cfg.output_dir.join(report);
    if let Ok(text) = std::fs::read_to_string(&text_path) {
        print!("{text}");
    }
    let config_json = serde_json::to_value(&cfg).expect("config serializes");
    let manifest = out.finish(name, Some(cfg.hash()), Some(config_json), start.elapsed())?;
    eprintln!("manifest: {}", manifest.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    use commands::*;
    match cli.command {
        Command::GenSynthetic(a) => {
            let start = Instant::now();
            let mut spec = ExperimentConfig::load(a.config.as_deref(), &a.set)?.synthetic;
            spec.n_classes = a.n_classes.unwrap_or(spec.n_classes);
            spec.docs_per_class = a.docs_per_class.unwrap_or(spec.docs_per_class);
            spec.vocab_per_class = a.vocab_per_class.unwrap_or(spec.vocab_per_class);
            spec.overlap = a.overlap.unwrap_or(spec.overlap);
            spec.doc_length_range = (
                a.min_len.unwrap_or(spec.doc_length_range.0),
                a.max_len.unwrap_or(spec.doc_length_range.1),
            );
            spec.seed = a.seed.unwrap_or(spec.seed);
            let dir = a.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut out = Outputs::new(dir)?;
            let corpus = cmd_gen_synthetic(&spec, &a.out, &mut out)?;
            println!("wrote {} documents to {}", corpus.len(), a.out.display());
            let spec_json = serde_json::to_value(&spec).expect("spec serializes");
            out.finish("gen-synthetic", None, Some(spec_json), start.elapsed())?;
            Ok(())
        }
        Command::CompareDist(a) => {
            let start = Instant::now();
            let mut out = Outputs::new(&a.output_dir)?;
            cmd_compare_dist(&a.a, &a.b, &mut out)?;
            if let Ok(text) = std::fs::read_to_string(a.output_dir.join("compare_dist.txt")) {
                print!("{text}");
            }
            out.finish("compare-dist", None, None, start.elapsed())?;
            Ok(())
        }
        Command::Train(c) => with_config(&c, "train", "train.txt", |cfg, out| cmd_train(cfg, out).map(drop)),
        Command::TuneEnsemble(c) => {
            with_config(&c, "tune-ensemble", "tune_ensemble.txt", |cfg, out| cmd_tune_ensemble(cfg, out).map(drop))
        }
        Command::Evaluate(c) => with_config(&c, "evaluate", "evaluate.txt", |cfg, out| cmd_evaluate(cfg, out).map(drop)),
        Command::Confide(c) => with_config(&c, "confide", "confide.txt", |cfg, out| cmd_confide(cfg, out).map(drop)),
        Command::LearningCurve(c) => {
            with_config(&c, "learning-curve", "learning_curve.txt", |cfg, out| cmd_learning_curve(cfg, out).map(drop))
        }
        Command::EpochSweep(c) => {
            with_config(&c, "epoch-sweep", "epoch_sweep.txt", |cfg, out| cmd_epoch_sweep(cfg, out).map(drop))
        }
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code: 0 success, 1 usage/config error, 2 data error, 3 numeric
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
