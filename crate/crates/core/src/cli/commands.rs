use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, default_reduction, TagAlphabet, TagCorpus};
use crate::counts::{self, ContextSpec, CountTable};
use crate::divergence::{conditional_relative_entropy_with, DivergenceOptions, OuterWeighting};
use crate::generation::{generate_batch, GenerationConfig, GenerationMode, MaskedModel, NGramMaskedModel};
use crate::predictability::{
    self, avg_conditional_entropy_with, compare_entropies, compare_languages, mine_patterns,
    noncausal_minus_causal, position_sweep_with, EntropyOptions,
};
use crate::report::{
    self, BatchSidecar, ComparisonSummary, ContextKind, CorpusInfo, EntropyRun, EvaluationCell,
    EvaluationGrid, PatternTable, SummaryRow,
};
use crate::synthetic;

use super::manifest::{InputRecord, Manifest, MANIFEST_FILE};
use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Tagstream,
    Conllu,
}

/// Whether context windows stay inside sentences or run across a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StreamMode {
    #[default]
    Sentences,
    Documents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Json,
    Csv,
    #[default]
    Both,
}

impl Emit {
    fn json(self) -> bool {
        matches!(self, Emit::Json | Emit::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Emit::Csv | Emit::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PatternMode {
    #[default]
    Causal,
    Middle,
}

/// `all`, or a single predicted position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositionSel {
    #[default]
    All,
    At(usize),
}

impl FromStr for PositionSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            Ok(PositionSel::All)
        } else {
            s.parse()
                .map(PositionSel::At)
                .map_err(|_| format!("expected `all` or a position index, got {s:?}"))
        }
    }
}

impl Serialize for PositionSel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PositionSel::All => s.serialize_str("all"),
            PositionSel::At(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for PositionSel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Index(k) => Ok(PositionSel::At(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInput {
    pub path: PathBuf,
    pub format: CorpusFormat,
    /// Alphabet JSON file; the nine-tag default when absent.
    pub alphabet: Option<PathBuf>,
    pub stream: StreamMode,
}

impl CorpusInput {
    pub fn tagstream(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: CorpusFormat::Tagstream,
            alphabet: None,
            stream: StreamMode::Sentences,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub out: PathBuf,
    pub emit: Emit,
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_alphabet(path: Option<&Path>) -> Result<(Arc<TagAlphabet>, Option<InputRecord>), CliError> {
    match path {
        None => Ok((Arc::new(default_reduction()), None)),
        Some(p) => {
            let bytes = read_input(p)?;
            let text = String::from_utf8_lossy(&bytes);
            let alphabet = TagAlphabet::from_json(&text).map_err(|source| CliError::Input {
                path: p.to_path_buf(),
                source,
            })?;
            Ok((Arc::new(alphabet), Some(InputRecord::new(p, &bytes))))
        }
    }
}

/// Reads a corpus and records its checksum (and the alphabet's) in the manifest.
pub fn load_corpus(input: &CorpusInput, manifest: &mut Manifest) -> Result<TagCorpus, CliError> {
    let (alphabet, alphabet_record) = load_alphabet(input.alphabet.as_deref())?;
    let bytes = read_input(&input.path)?;
    let parsed = match input.format {
        CorpusFormat::Tagstream => corpus::read_tagstream(bytes.as_slice(), alphabet),
        CorpusFormat::Conllu => corpus::read_conllu(bytes.as_slice(), alphabet),
    };
    let corpus = parsed.map_err(|source| CliError::Input {
        path: input.path.clone(),
        source,
    })?;
    manifest.inputs.push(InputRecord::new(&input.path, &bytes));
    if let Some(rec) = alphabet_record {
        if !manifest.inputs.contains(&rec) {
            manifest.inputs.push(rec);
        }
    }
    Ok(match input.stream {
        StreamMode::Sentences => corpus,
        StreamMode::Documents => corpus.as_document_stream(),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file<F>(dir: &Path, name: &str, manifest: &mut Manifest, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let err = |source| CliError::Output {
        path: path.clone(),
        source,
    };
    let file = fs::File::create(&path).map_err(err)?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(err)?;
    w.flush().map_err(err)?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, manifest: &mut Manifest, value: &T) -> Result<(), CliError> {
    write_file(dir, name, manifest, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn finish(dir: &Path, mut manifest: Manifest) -> Result<Manifest, CliError> {
    manifest.outputs.push(MANIFEST_FILE.to_string());
    let m = manifest.clone();
    write_json(dir, MANIFEST_FILE, &mut manifest, &m)?;
    Ok(m)
}

// ---------------------------------------------------------------- entropy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    pub input: CorpusInput,
    pub window: usize,
    pub position: PositionSel,
    pub per_context: bool,
    pub miller_madow: bool,
    pub target_variance: f64,
    pub output: OutputSpec,
}

/// Entropy reports for one corpus and window. With `PositionSel::All` this is
/// the full position sweep plus the non-causal aggregate.
pub fn entropy_run(
    corpus: &TagCorpus,
    info: CorpusInfo,
    window: usize,
    position: PositionSel,
    opts: &EntropyOptions,
) -> Result<EntropyRun, CliError> {
    let (positions, aggregate) = match position {
        PositionSel::All => {
            let sweep = position_sweep_with(corpus, window, opts)?;
            let agg = noncausal_minus_causal(&sweep)?;
            (sweep, Some(agg))
        }
        PositionSel::At(k) => {
            let spec = ContextSpec::new(window, k)?;
            let table = counts::count(corpus, spec)?;
            (vec![avg_conditional_entropy_with(&table, opts)?], None)
        }
    };
    let mut run = EntropyRun {
        format: report::ENTROPY_FORMAT.to_string(),
        corpus: info,
        window_len: window,
        positions,
        causal_bits: None,
        middle_bits: None,
        noncausal_minus_causal_bits: aggregate,
    };
    run.causal_bits = run.position(window).map(|r| r.avg_entropy_bits);
    run.middle_bits = run
        .position(window.div_ceil(2))
        .map(|r| r.avg_entropy_bits);
    Ok(run)
}

pub fn run_entropy(p: &EntropyParams) -> Result<(EntropyRun, Manifest), CliError> {
    let mut manifest = Manifest::new("entropy", p);
    let corpus = load_corpus(&p.input, &mut manifest)?;
    let opts = EntropyOptions {
        per_context: p.per_context,
        miller_madow: p.miller_madow,
        target_norm_variance: p.target_variance,
    };
    if !(p.target_variance > 0.0) {
        return Err(CliError::Spec("target variance must be positive".into()));
    }
    let info = CorpusInfo::new(p.input.path.display().to_string(), &corpus);
    let run = entropy_run(&corpus, info, p.window, p.position, &opts)?;
    for r in &run.positions {
        if !r.sufficiency.context_sufficient() {
            manifest.warnings.push(format!(
                "{}: {} windows is below the {} needed for the context estimator at variance {}",
                r.spec,
                r.windows_used,
                r.sufficiency.required_context_tokens,
                p.target_variance
            ));
        }
    }
    let dir = &p.output.out;
    create_dir(dir)?;
    if p.output.emit.json() {
        write_json(dir, "entropy.json", &mut manifest, &run)?;
    }
    if p.output.emit.csv() {
        write_file(dir, "entropy.csv", &mut manifest, |w| {
            report::write_entropy_csv(&run, w).map_err(csv_io)
        })?;
        if p.per_context {
            for r in &run.positions {
                let name = format!("contexts_k{}.csv", r.spec.predicted_pos());
                write_file(dir, &name, &mut manifest, |w| {
                    report::write_context_csv(r, corpus.alphabet(), w).map_err(csv_io)
                })?;
            }
        }
    }
    let manifest = finish(dir, manifest)?;
    Ok((run, manifest))
}

// ---------------------------------------------------------------- patterns

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub input: CorpusInput,
    pub window: usize,
    pub mode: PatternMode,
    /// Overrides `mode` when set.
    pub position: Option<usize>,
    pub threshold: f64,
    pub min_count: u64,
    pub output: OutputSpec,
}

pub fn run_patterns(p: &PatternParams) -> Result<(PatternTable, Manifest), CliError> {
    let mut manifest = Manifest::new("patterns", p);
    let corpus = load_corpus(&p.input, &mut manifest)?;
    let spec = match (p.position, p.mode) {
        (Some(k), _) => ContextSpec::new(p.window, k)?,
        (None, PatternMode::Causal) => ContextSpec::causal(p.window)?,
        (None, PatternMode::Middle) => ContextSpec::middle(p.window)?,
    };
    let table = counts::count(&corpus, spec)?;
    let rows = mine_patterns(&table, p.threshold, p.min_count);
    let info = CorpusInfo::new(p.input.path.display().to_string(), &corpus);
    let out = PatternTable::new(info, spec, p.threshold, p.min_count, &rows, corpus.alphabet());
    let dir = &p.output.out;
    create_dir(dir)?;
    if p.output.emit.json() {
        write_json(dir, "patterns.json", &mut manifest, &out)?;
    }
    if p.output.emit.csv() {
        write_file(dir, "patterns.csv", &mut manifest, |w| {
            report::write_patterns_csv(&out, w).map_err(csv_io)
        })?;
    }
    let manifest = finish(dir, manifest)?;
    Ok((out, manifest))
}

// ---------------------------------------------------------------- count

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountParams {
    pub input: CorpusInput,
    pub window: usize,
    pub position: usize,
    pub out: PathBuf,
}

pub fn run_count(p: &CountParams) -> Result<(CountTable, Manifest), CliError> {
    let mut manifest = Manifest::new("count", p);
    let corpus = load_corpus(&p.input, &mut manifest)?;
    let table = counts::count(&corpus, ContextSpec::new(p.window, p.position)?)?;
    create_dir(&p.out)?;
    write_json(&p.out, "counts.json", &mut manifest, &table.to_file(corpus.alphabet()))?;
    let manifest = finish(&p.out, manifest)?;
    Ok((table, manifest))
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    /// Training corpus for the bundled n-gram model.
    pub input: CorpusInput,
    pub mode: GenerationMode,
    /// Context tags per side for the non-causal model; the causal model uses
    /// twice as many left tags so both see windows of the same size.
    pub model_context: usize,
    pub config: GenerationConfig,
    pub count: usize,
    pub out: PathBuf,
}

pub const BATCH_FILE: &str = "batch.tags";
pub const BATCH_SIDECAR_FILE: &str = "batch.json";

pub fn build_model(corpus: &TagCorpus, mode: GenerationMode, side: usize) -> Result<NGramMaskedModel, CliError> {
    Ok(match mode {
        GenerationMode::NonCausal => NGramMaskedModel::noncausal(corpus, side)?,
        GenerationMode::Causal => NGramMaskedModel::causal(corpus, 2 * side.max(1))?,
    })
}

pub fn run_generate(p: &GenerateParams) -> Result<(BatchSidecar, Manifest), CliError> {
    let mut manifest = Manifest::new("generate", p);
    p.config.validate()?;
    if p.count == 0 {
        return Err(CliError::Spec("count must be at least 1".into()));
    }
    let corpus = load_corpus(&p.input, &mut manifest)?;
    let model = build_model(&corpus, p.mode, p.model_context)?;
    let batch = generate_batch(&model, &p.config, p.mode, p.count)?;
    let alphabet = corpus.alphabet();
    let sidecar = BatchSidecar {
        format: report::BATCH_FORMAT.to_string(),
        mode: p.mode,
        config: p.config.clone(),
        count: p.count,
        model: model.identity(),
        training_corpus_sha256: manifest.inputs[0].sha256.clone(),
        model_calls_per_sequence: p.config.expected_calls(p.mode),
        total_model_calls: batch.iter().map(|g| g.model_calls).sum(),
        fallback_events: batch.iter().map(|g| g.fallback_events).sum(),
    };
    create_dir(&p.out)?;
    write_file(&p.out, BATCH_FILE, &mut manifest, |w| {
        for g in &batch {
            let names: Vec<&str> = g.tokens.iter().map(|&t| alphabet.name(t)).collect();
            w.write_all(names.join(" ").as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    write_json(&p.out, BATCH_SIDECAR_FILE, &mut manifest, &sidecar)?;
    manifest.diagnostic("model", &sidecar.model);
    manifest.diagnostic("model_calls_per_sequence", sidecar.model_calls_per_sequence);
    manifest.diagnostic("fallback_events", sidecar.fallback_events);
    let manifest = finish(&p.out, manifest)?;
    Ok((sidecar, manifest))
}

// ---------------------------------------------------------------- evaluate

/// A path with a display label; `label=path` on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPath {
    pub label: String,
    pub path: PathBuf,
}

impl FromStr for LabeledPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        if let Some((label, path)) = s.split_once('=') {
            if !label.is_empty() && !path.is_empty() {
                return Ok(Self {
                    label: label.to_string(),
                    path: PathBuf::from(path),
                });
            }
        }
        let path = PathBuf::from(s);
        let label = path
            .file_stem()
            .map(|x| x.to_string_lossy().into_owned())
            .unwrap_or_else(|| s.to_string());
        Ok(Self { label, path })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateParams {
    pub references: Vec<LabeledPath>,
    /// Format of the reference corpora; batches are always tag streams.
    pub format: CorpusFormat,
    pub alphabet: Option<PathBuf>,
    pub batches: Vec<LabeledPath>,
    pub window: usize,
    pub alpha: f64,
    pub weighting: OuterWeighting,
    pub output: OutputSpec,
}

pub fn run_evaluate(p: &EvaluateParams) -> Result<(EvaluationGrid, Manifest), CliError> {
    let mut manifest = Manifest::new("evaluate", p);
    if p.references.is_empty() || p.batches.is_empty() {
        return Err(CliError::Spec("need at least one reference and one batch".into()));
    }
    let specs = [
        (ContextKind::Causal, ContextSpec::causal(p.window)?),
        (ContextKind::NonCausal, ContextSpec::middle(p.window)?),
    ];
    let load_tables = |lp: &LabeledPath, format, manifest: &mut Manifest| {
        let input = CorpusInput {
            path: lp.path.clone(),
            format,
            alphabet: p.alphabet.clone(),
            stream: StreamMode::Sentences,
        };
        let corpus = load_corpus(&input, manifest)?;
        specs
            .iter()
            .map(|&(_, s)| counts::count(&corpus, s).map_err(CliError::from))
            .collect::<Result<Vec<_>, CliError>>()
    };
    let mut refs = Vec::new();
    for r in &p.references {
        refs.push(load_tables(r, p.format, &mut manifest)?);
    }
    let mut grid = EvaluationGrid {
        format: report::EVALUATION_FORMAT.to_string(),
        window_len: p.window,
        alpha: p.alpha,
        weighting: p.weighting,
        references: p.references.iter().map(|r| r.label.clone()).collect(),
        batches: p.batches.iter().map(|b| b.label.clone()).collect(),
        cells: Vec::new(),
    };
    let opts = DivergenceOptions {
        alpha: p.alpha,
        weighting: p.weighting,
    };
    let mut skipped = 0;
    let mut unbounded = 0;
    for b in &p.batches {
        let batch_tables = load_tables(b, CorpusFormat::Tagstream, &mut manifest)?;
        for (r, ref_tables) in p.references.iter().zip(&refs) {
            for (i, &(kind, _)) in specs.iter().enumerate() {
                let report = conditional_relative_entropy_with(&ref_tables[i], &batch_tables[i], &opts)?;
                skipped += report.contexts_skipped;
                unbounded += report.unbounded_terms;
                grid.cells.push(EvaluationCell {
                    batch: b.label.clone(),
                    reference: r.label.clone(),
                    context: kind,
                    report,
                });
            }
        }
    }
    manifest.diagnostic("contexts_skipped", skipped);
    manifest.diagnostic("unbounded_terms", unbounded);
    if p.alpha == 0.0 && (skipped > 0 || unbounded > 0) {
        manifest.warnings.push(format!(
            "alpha = 0: {skipped} contexts unseen in a reference were dropped and {unbounded} \
             unbounded outcome terms were left out; divergences cover shared support only"
        ));
    }
    let dir = &p.output.out;
    create_dir(dir)?;
    if p.output.emit.json() {
        write_json(dir, "evaluation.json", &mut manifest, &grid)?;
    }
    if p.output.emit.csv() {
        write_file(dir, "evaluation.csv", &mut manifest, |w| {
            report::write_evaluation_csv(&grid, w).map_err(csv_io)
        })?;
    }
    let manifest = finish(dir, manifest)?;
    Ok((grid, manifest))
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    pub corpus_a: CorpusInput,
    pub corpus_b: CorpusInput,
    pub label_a: String,
    pub label_b: String,
    pub min_window: usize,
    pub max_window: usize,
    pub output: OutputSpec,
}

pub fn run_compare(p: &CompareParams) -> Result<(ComparisonSummary, Manifest), CliError> {
    let mut manifest = Manifest::new("compare", p);
    if p.min_window < 2 || p.max_window < p.min_window {
        return Err(CliError::Spec(format!(
            "window range {}..={} must start at 2 or more and be non-empty",
            p.min_window, p.max_window
        )));
    }
    let a = load_corpus(&p.corpus_a, &mut manifest)?;
    let b = load_corpus(&p.corpus_b, &mut manifest)?;
    let info_a = CorpusInfo::new(&p.label_a, &a);
    let info_b = CorpusInfo::new(&p.label_b, &b);
    let opts = EntropyOptions::default();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for n in p.min_window..=p.max_window {
        let run_a = entropy_run(&a, info_a.clone(), n, PositionSel::All, &opts)?;
        let run_b = entropy_run(&b, info_b.clone(), n, PositionSel::All, &opts)?;
        let causal = compare_languages(
            run_a.position(n).expect("sweep has causal entry"),
            run_b.position(n).expect("sweep has causal entry"),
        )?;
        let ncmc = compare_entropies(
            run_a.noncausal_minus_causal_bits.expect("full sweep"),
            run_b.noncausal_minus_causal_bits.expect("full sweep"),
        );
        rows.push(SummaryRow {
            window_len: n,
            causal,
            noncausal_minus_causal: ncmc,
            middle_a: run_a.middle_bits.expect("full sweep"),
            middle_b: run_b.middle_bits.expect("full sweep"),
        });
        runs.push((run_a, run_b));
    }
    let summary = ComparisonSummary {
        format: report::SUMMARY_FORMAT.to_string(),
        label_a: p.label_a.clone(),
        label_b: p.label_b.clone(),
        rows,
    };
    let dir = &p.output.out;
    create_dir(dir)?;
    if p.output.emit.json() {
        write_json(dir, "summary.json", &mut manifest, &summary)?;
    }
    if p.output.emit.csv() {
        write_file(dir, "summary.csv", &mut manifest, |w| {
            report::write_summary_csv(&summary, w).map_err(csv_io)
        })?;
        for (run_a, run_b) in &runs {
            for (label, run) in [(&p.label_a, run_a), (&p.label_b, run_b)] {
                let name = format!("entropy_{}_N{}.csv", file_safe(label), run.window_len);
                write_file(dir, &name, &mut manifest, |w| {
                    report::write_entropy_csv(run, w).map_err(csv_io)
                })?;
            }
        }
    }
    write_file(dir, "summary.txt", &mut manifest, |w| w.write_all(summary.render().as_bytes()))?;
    let manifest = finish(dir, manifest)?;
    Ok((summary, manifest))
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

// ---------------------------------------------------------------- demo

pub fn run_demo(out: &Path) -> Result<TagCorpus, CliError> {
    let corpus = synthetic::demo_corpus();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(out, corpus.to_tagstream()).map_err(|source| CliError::Output {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(corpus)
}

/// Default entropy threshold for `patterns`.
pub const DEFAULT_THRESHOLD: f64 = predictability::DEFAULT_PATTERN_THRESHOLD;
