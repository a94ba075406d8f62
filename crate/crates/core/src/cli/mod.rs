//! Command-line front end.
//!
//! Every flag can also be set in a TOML file passed with `--config`; keys are
//! the long flag names with `-` replaced by `_`. Command-line values win.
//!
//! Exit codes: 0 success, 1 output failure, 2 bad input, 3 bad analysis
//! parameters.

pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::IngestError;
use crate::counts::CountError;
use crate::divergence::{DivergenceError, OuterWeighting, DEFAULT_ALPHA};
use crate::generation::{FilterSet, GenerationConfig, GenerationError, GenerationMode};
use crate::predictability::{AnalysisError, DEFAULT_MIN_CONTEXT_COUNT, DEFAULT_TARGET_NORM_VARIANCE};

use commands::*;

pub const THREADS_ENV: &str = "PREDICTALANG_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: IngestError },
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Spec(String),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Input { .. } | CliError::Config { .. } => 2,
            CliError::Spec(_) => 3,
            CliError::Output { .. } => 1,
        }
    }
}

impl From<CountError> for CliError {
    fn from(e: CountError) -> Self {
        CliError::Spec(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Spec(e.to_string())
    }
}

impl From<DivergenceError> for CliError {
    fn from(e: DivergenceError) -> Self {
        CliError::Spec(e.to_string())
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        CliError::Spec(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "predictalang", version, about = "Tag-sequence predictability analysis")]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average conditional entropy for one window, at one or all positions.
    Entropy(EntropyArgs),
    /// Low-entropy contexts and their most likely tag.
    Patterns(PatternArgs),
    /// Sample tag sequences from an n-gram model trained on a corpus.
    Generate(GenerateArgs),
    /// Divergence of generated batches from reference corpora.
    Evaluate(EvaluateArgs),
    /// Side-by-side entropy summary of two corpora over a range of windows.
    Compare(CompareArgs),
    /// Write a context count table as JSON.
    Count(CountArgs),
    /// Write the synthetic demo corpus.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<CorpusFormat>,
    /// Alphabet JSON (tags plus reduction map).
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stream: Option<StreamMode>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub emit: Option<Emit>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Window size N; the window holds N + 1 tags.
    #[arg(long)]
    pub window: Option<usize>,
    /// `all` or k, the number of context tags left of the predicted one.
    #[arg(long)]
    pub position: Option<PositionSel>,
    #[arg(long)]
    pub per_context: bool,
    #[arg(long)]
    pub miller_madow: bool,
    #[arg(long)]
    pub target_variance: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<PatternMode>,
    #[arg(long)]
    pub position: Option<usize>,
    /// Maximum conditional entropy in bits.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// `noncausal` or `causal`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub model_context: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Turn off all candidate filters.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference corpus, `label=path` or a bare path. Repeatable.
    #[arg(long = "reference")]
    pub references: Vec<LabeledPath>,
    /// Generated batch, `label=path` or a bare path. Repeatable.
    #[arg(long = "batch")]
    pub batches: Vec<LabeledPath>,
    #[arg(long, value_enum)]
    pub format: Option<CorpusFormat>,
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `evaluated` or `reference`.
    #[arg(long)]
    pub weighting: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub corpus_a: Option<PathBuf>,
    #[arg(long)]
    pub corpus_b: Option<PathBuf>,
    #[arg(long)]
    pub label_a: Option<String>,
    #[arg(long)]
    pub label_b: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<CorpusFormat>,
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stream: Option<StreamMode>,
    #[arg(long)]
    pub min_window: Option<usize>,
    #[arg(long)]
    pub max_window: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub position: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Destination tag-stream file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub alphabet: Option<PathBuf>,
    pub stream: Option<StreamMode>,
    pub out: Option<PathBuf>,
    pub emit: Option<Emit>,
    pub window: Option<usize>,
    pub position: Option<PositionSel>,
    pub per_context: Option<bool>,
    pub miller_madow: Option<bool>,
    pub target_variance: Option<f64>,
    pub mode: Option<String>,
    pub threshold: Option<f64>,
    pub min_count: Option<u64>,
    pub model_context: Option<usize>,
    pub seq_len: Option<usize>,
    pub iterations: Option<usize>,
    pub group_size: Option<usize>,
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    pub count: Option<usize>,
    pub no_filter: Option<bool>,
    pub reference: Vec<String>,
    pub batch: Vec<String>,
    pub alpha: Option<f64>,
    pub weighting: Option<String>,
    pub corpus_a: Option<PathBuf>,
    pub corpus_b: Option<PathBuf>,
    pub label_a: Option<String>,
    pub label_b: Option<String>,
    pub min_window: Option<usize>,
    pub max_window: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub const DEFAULT_WINDOW: usize = 2;
pub const DEFAULT_MODEL_CONTEXT: usize = 2;
pub const DEFAULT_BATCH_COUNT: usize = 1000;
pub const DEFAULT_MIN_WINDOW: usize = 2;
pub const DEFAULT_MAX_WINDOW: usize = 6;

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Spec(format!("missing required option --{flag}")))
}

fn out_dir(cli: Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf, CliError> {
    required(cli.or_else(|| cfg.out.clone()), "out")
}

fn corpus_input(a: CorpusArgs, cfg: &ConfigFile) -> Result<CorpusInput, CliError> {
    Ok(CorpusInput {
        path: required(a.corpus.or_else(|| cfg.corpus.clone()), "corpus")?,
        format: a.format.or(cfg.format).unwrap_or_default(),
        alphabet: a.alphabet.or_else(|| cfg.alphabet.clone()),
        stream: a.stream.or(cfg.stream).unwrap_or_default(),
    })
}

fn output(a: OutArgs, cfg: &ConfigFile) -> Result<OutputSpec, CliError> {
    Ok(OutputSpec {
        out: out_dir(a.out, cfg)?,
        emit: a.emit.or(cfg.emit).unwrap_or_default(),
    })
}

fn parse_mode(s: &str) -> Result<GenerationMode, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "noncausal" | "non-causal" => Ok(GenerationMode::NonCausal),
        "causal" => Ok(GenerationMode::Causal),
        _ => Err(CliError::Spec(format!("unknown generation mode {s:?}"))),
    }
}

fn parse_weighting(s: &str) -> Result<OuterWeighting, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "evaluated" => Ok(OuterWeighting::Evaluated),
        "reference" => Ok(OuterWeighting::Reference),
        _ => Err(CliError::Spec(format!("unknown weighting {s:?}"))),
    }
}

fn labeled(list: Vec<LabeledPath>, fallback: &[String]) -> Result<Vec<LabeledPath>, CliError> {
    if !list.is_empty() {
        return Ok(list);
    }
    fallback
        .iter()
        .map(|s| s.parse().map_err(CliError::Spec))
        .collect()
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if the pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Runs a parsed command; the returned string is a short report for stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Entropy(a) => {
            let p = EntropyParams {
                window: a.window.or(cfg.window).unwrap_or(DEFAULT_WINDOW),
                position: a.position.or(cfg.position).unwrap_or_default(),
                per_context: a.per_context || cfg.per_context.unwrap_or(false),
                miller_madow: a.miller_madow || cfg.miller_madow.unwrap_or(false),
                target_variance: a
                    .target_variance
                    .or(cfg.target_variance)
                    .unwrap_or(DEFAULT_TARGET_NORM_VARIANCE),
                input: corpus_input(a.corpus, &cfg)?,
                output: output(a.out, &cfg)?,
            };
            let (run, m) = run_entropy(&p)?;
            let mut s = String::new();
            for r in &run.positions {
                s.push_str(&format!("{}\t{:.6}\n", r.spec, r.avg_entropy_bits));
            }
            if let Some(d) = run.noncausal_minus_causal_bits {
                s.push_str(&format!("noncausal_minus_causal\t{d:.6}\n"));
            }
            Ok(with_warnings(s, &m.warnings))
        }
        Command::Patterns(a) => {
            let mode = match a.mode {
                Some(m) => m,
                None => match cfg.mode.as_deref() {
                    None | Some("causal") => PatternMode::Causal,
                    Some("middle") => PatternMode::Middle,
                    Some(other) => return Err(CliError::Spec(format!("unknown pattern mode {other:?}"))),
                },
            };
            let p = PatternParams {
                window: a.window.or(cfg.window).unwrap_or(DEFAULT_WINDOW),
                mode,
                position: a.position.or(match cfg.position {
                    Some(PositionSel::At(k)) => Some(k),
                    _ => None,
                }),
                threshold: a.threshold.or(cfg.threshold).unwrap_or(DEFAULT_THRESHOLD),
                min_count: a.min_count.or(cfg.min_count).unwrap_or(DEFAULT_MIN_CONTEXT_COUNT),
                input: corpus_input(a.corpus, &cfg)?,
                output: output(a.out, &cfg)?,
            };
            let (t, _) = run_patterns(&p)?;
            Ok(format!("{} patterns for {}\n", t.rows.len(), t.spec))
        }
        Command::Generate(a) => {
            let defaults = GenerationConfig::default();
            let no_filter = a.no_filter || cfg.no_filter.unwrap_or(false);
            let config = GenerationConfig {
                seq_len: a.seq_len.or(cfg.seq_len).unwrap_or(defaults.seq_len),
                iterations: a.iterations.or(cfg.iterations).unwrap_or(defaults.iterations),
                group_size: a.group_size.or(cfg.group_size).unwrap_or(defaults.group_size),
                seed: a.seed.or(cfg.seed).unwrap_or(defaults.seed),
                temperature: a.temperature.or(cfg.temperature).unwrap_or(defaults.temperature),
                filters: if no_filter { FilterSet::none() } else { FilterSet::all() },
            };
            let mode = match a.mode.or_else(|| cfg.mode.clone()) {
                Some(m) => parse_mode(&m)?,
                None => GenerationMode::NonCausal,
            };
            let p = GenerateParams {
                mode,
                model_context: a.model_context.or(cfg.model_context).unwrap_or(DEFAULT_MODEL_CONTEXT),
                config,
                count: a.count.or(cfg.count).unwrap_or(DEFAULT_BATCH_COUNT),
                input: corpus_input(a.corpus, &cfg)?,
                out: out_dir(a.out, &cfg)?,
            };
            let (side, m) = run_generate(&p)?;
            let s = format!(
                "{} sequences, {} model calls each, {} fallback events\n",
                side.count, side.model_calls_per_sequence, side.fallback_events
            );
            Ok(with_warnings(s, &m.warnings))
        }
        Command::Evaluate(a) => {
            let weighting = match a.weighting.or_else(|| cfg.weighting.clone()) {
                Some(w) => parse_weighting(&w)?,
                None => OuterWeighting::Evaluated,
            };
            let p = EvaluateParams {
                references: labeled(a.references, &cfg.reference)?,
                batches: labeled(a.batches, &cfg.batch)?,
                format: a.format.or(cfg.format).unwrap_or_default(),
                alphabet: a.alphabet.or_else(|| cfg.alphabet.clone()),
                window: a.window.or(cfg.window).unwrap_or(DEFAULT_WINDOW),
                alpha: a.alpha.or(cfg.alpha).unwrap_or(DEFAULT_ALPHA),
                weighting,
                output: output(a.out, &cfg)?,
            };
            let (grid, m) = run_evaluate(&p)?;
            Ok(with_warnings(grid.render(), &m.warnings))
        }
        Command::Compare(a) => {
            let side = |path: Option<PathBuf>, cfg_path: &Option<PathBuf>, flag| -> Result<CorpusInput, CliError> {
                Ok(CorpusInput {
                    path: required(path.or_else(|| cfg_path.clone()), flag)?,
                    format: a.format.or(cfg.format).unwrap_or_default(),
                    alphabet: a.alphabet.clone().or_else(|| cfg.alphabet.clone()),
                    stream: a.stream.or(cfg.stream).unwrap_or_default(),
                })
            };
            let corpus_a = side(a.corpus_a.clone(), &cfg.corpus_a, "corpus-a")?;
            let corpus_b = side(a.corpus_b.clone(), &cfg.corpus_b, "corpus-b")?;
            let p = CompareParams {
                corpus_a,
                corpus_b,
                label_a: a.label_a.or_else(|| cfg.label_a.clone()).unwrap_or_else(|| "A".into()),
                label_b: a.label_b.or_else(|| cfg.label_b.clone()).unwrap_or_else(|| "B".into()),
                min_window: a.min_window.or(cfg.min_window).unwrap_or(DEFAULT_MIN_WINDOW),
                max_window: a.max_window.or(cfg.max_window).unwrap_or(DEFAULT_MAX_WINDOW),
                output: output(a.out, &cfg)?,
            };
            let (summary, m) = run_compare(&p)?;
            Ok(with_warnings(summary.render(), &m.warnings))
        }
        Command::Count(a) => {
            let window = a.window.or(cfg.window).unwrap_or(DEFAULT_WINDOW);
            let position = match a.position {
                Some(k) => k,
                None => match cfg.position {
                    Some(PositionSel::At(k)) => k,
                    _ => window,
                },
            };
            let p = CountParams {
                window,
                position,
                input: corpus_input(a.corpus, &cfg)?,
                out: out_dir(a.out, &cfg)?,
            };
            let (t, _) = run_count(&p)?;
            Ok(format!("{} contexts, {} windows\n", t.len(), t.total()))
        }
        Command::Demo(a) => {
            let out = out_dir(a.out, &cfg)?;
            let c = run_demo(&out)?;
            Ok(format!("{} tokens written to {}\n", c.token_count(), out.display()))
        }
    }
}

fn with_warnings(mut s: String, warnings: &[String]) -> String {
    for w in warnings {
        s.push_str("warning: ");
        s.push_str(w);
        s.push('\n');
    }
    s
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
                _ => 2,
            };
        }
    };
    configure_threads();
    match run(cli) {
        Ok(s) => {
            print!("{s}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
