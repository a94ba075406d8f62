//! Report records written by the command-line tool.
//!
//! Every JSON document carries a `format` string naming its schema in
//! `schemas/`. CSV column names are fixed; the few that depend on the window
//! (pattern context columns) follow the `X_{i-d}` / `X_{i+d}` convention.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{TagAlphabet, TagCorpus};
use crate::counts::ContextSpec;
use crate::divergence::{DivergenceReport, OuterWeighting};
use crate::generation::{GenerationConfig, GenerationMode};
use crate::predictability::{Comparison, EntropyReport, PatternRow, Winner};

pub const ENTROPY_FORMAT: &str = "predictalang.entropy.v1";
pub const PATTERNS_FORMAT: &str = "predictalang.patterns.v1";
pub const EVALUATION_FORMAT: &str = "predictalang.evaluation.v1";
pub const SUMMARY_FORMAT: &str = "predictalang.summary.v1";
pub const BATCH_FORMAT: &str = "predictalang.batch.v1";

pub const ENTROPY_CSV_COLUMNS: [&str; 9] = [
    "row_kind",
    "window_len",
    "predicted_pos",
    "avg_entropy_bits",
    "windows",
    "contexts_observed",
    "required_context_tokens",
    "required_outcome_tokens",
    "miller_madow_bits",
];

pub const CONTEXT_CSV_COLUMNS: [&str; 7] = [
    "context",
    "predicted_pos",
    "count",
    "context_prob",
    "entropy_bits",
    "argmax_tag",
    "max_prob",
];

/// Columns that follow the per-position context columns.
pub const PATTERN_CSV_TAIL: [&str; 4] = ["max_prob_tag", "max_prob", "entropy_bits", "context_count"];

pub const SUMMARY_CSV_COLUMNS: [&str; 11] = [
    "window_len",
    "causal_a",
    "causal_b",
    "causal_winner",
    "causal_margin_pct",
    "noncausal_minus_causal_a",
    "noncausal_minus_causal_b",
    "noncausal_minus_causal_winner",
    "noncausal_minus_causal_margin_pct",
    "middle_a",
    "middle_b",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub path: String,
    pub tokens: usize,
    pub sentences: usize,
    pub alphabet: Vec<String>,
}

impl CorpusInfo {
    pub fn new(path: impl Into<String>, corpus: &TagCorpus) -> Self {
        Self {
            path: path.into(),
            tokens: corpus.token_count(),
            sentences: corpus.sentence_count(),
            alphabet: corpus.alphabet().tags().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyRun {
    pub format: String,
    pub corpus: CorpusInfo,
    pub window_len: usize,
    /// Reports in ascending predicted position.
    pub positions: Vec<EntropyReport>,
    pub causal_bits: Option<f64>,
    pub middle_bits: Option<f64>,
    pub noncausal_minus_causal_bits: Option<f64>,
}

impl EntropyRun {
    pub fn position(&self, k: usize) -> Option<&EntropyReport> {
        self.positions.iter().find(|r| r.spec.predicted_pos() == k)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_entropy_csv<W: Write>(run: &EntropyRun, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ENTROPY_CSV_COLUMNS)?;
    for r in &run.positions {
        w.write_record([
            "position".to_string(),
            r.spec.window_len().to_string(),
            r.spec.predicted_pos().to_string(),
            r.avg_entropy_bits.to_string(),
            r.windows_used.to_string(),
            r.contexts_observed.to_string(),
            r.sufficiency.required_context_tokens.to_string(),
            r.sufficiency.required_outcome_tokens.to_string(),
            opt(r.miller_madow_bits),
        ])?;
    }
    if let Some(h) = run.noncausal_minus_causal_bits {
        w.write_record([
            "noncausal_minus_causal".to_string(),
            run.window_len.to_string(),
            String::new(),
            h.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per observed context of a report built with per-context rows.
pub fn write_context_csv<W: Write>(
    report: &EntropyReport,
    alphabet: &TagAlphabet,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONTEXT_CSV_COLUMNS)?;
    for row in report.per_context.iter().flatten() {
        let ctx: Vec<&str> = row.context.iter().map(|&t| alphabet.name(t)).collect();
        w.write_record([
            ctx.join(" "),
            report.spec.predicted_pos().to_string(),
            row.count.to_string(),
            row.context_prob.to_string(),
            row.entropy_bits.to_string(),
            alphabet.name(row.argmax).to_string(),
            row.max_prob.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternRecord {
    pub context: Vec<String>,
    pub pattern: String,
    pub max_prob_tag: String,
    pub max_prob: f64,
    pub entropy_bits: f64,
    pub context_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternTable {
    pub format: String,
    pub corpus: CorpusInfo,
    pub spec: ContextSpec,
    pub threshold_bits: f64,
    pub min_context_count: u64,
    pub context_labels: Vec<String>,
    pub rows: Vec<PatternRecord>,
}

impl PatternTable {
    pub fn new(
        corpus: CorpusInfo,
        spec: ContextSpec,
        threshold_bits: f64,
        min_context_count: u64,
        rows: &[PatternRow],
        alphabet: &TagAlphabet,
    ) -> Self {
        Self {
            format: PATTERNS_FORMAT.to_string(),
            corpus,
            spec,
            threshold_bits,
            min_context_count,
            context_labels: spec.context_labels(),
            rows: rows
                .iter()
                .map(|r| PatternRecord {
                    context: r.context.iter().map(|&t| alphabet.name(t).to_string()).collect(),
                    pattern: r.render_context(alphabet),
                    max_prob_tag: alphabet.name(r.argmax).to_string(),
                    max_prob: r.max_prob,
                    entropy_bits: r.entropy_bits,
                    context_count: r.context_count,
                })
                .collect(),
        }
    }
}

pub fn write_patterns_csv<W: Write>(table: &PatternTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = table
        .context_labels
        .iter()
        .map(String::as_str)
        .chain(PATTERN_CSV_TAIL)
        .collect();
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = r.context.clone();
        rec.push(r.max_prob_tag.clone());
        rec.push(r.max_prob.to_string());
        rec.push(r.entropy_bits.to_string());
        rec.push(r.context_count.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Causal,
    #[serde(rename = "noncausal")]
    NonCausal,
}

impl ContextKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContextKind::Causal => "causal",
            ContextKind::NonCausal => "noncausal",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationCell {
    pub batch: String,
    pub reference: String,
    pub context: ContextKind,
    pub report: DivergenceReport,
}

/// Divergence of every batch against every reference, for causal and
/// middle non-causal contexts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationGrid {
    pub format: String,
    pub window_len: usize,
    pub alpha: f64,
    pub weighting: OuterWeighting,
    pub references: Vec<String>,
    pub batches: Vec<String>,
    pub cells: Vec<EvaluationCell>,
}

impl EvaluationGrid {
    pub fn cell(&self, batch: &str, reference: &str, context: ContextKind) -> Option<&EvaluationCell> {
        self.cells
            .iter()
            .find(|c| c.batch == batch && c.reference == reference && c.context == context)
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut cols = vec!["batch".to_string()];
        for r in &self.references {
            for k in [ContextKind::Causal, ContextKind::NonCausal] {
                cols.push(format!("{r}:{}", k.as_str()));
            }
        }
        cols
    }

    /// Plain-text grid, batches as rows.
    pub fn render(&self) -> String {
        let cols = self.column_names();
        let width = cols.iter().chain(&self.batches).map(|c| c.len()).max().unwrap_or(8).max(8);
        let mut s = String::new();
        for c in &cols {
            s.push_str(&format!("{c:<width$}  "));
        }
        s.push('\n');
        for b in &self.batches {
            s.push_str(&format!("{b:<width$}  "));
            for r in &self.references {
                for k in [ContextKind::Causal, ContextKind::NonCausal] {
                    let v = self.cell(b, r, k).map(|c| format!("{:.4}", c.report.kl_bits));
                    s.push_str(&format!("{:<width$}  ", v.unwrap_or_default()));
                }
            }
            s.push('\n');
        }
        s
    }
}

pub fn write_evaluation_csv<W: Write>(grid: &EvaluationGrid, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(grid.column_names())?;
    for b in &grid.batches {
        let mut rec = vec![b.clone()];
        for r in &grid.references {
            for k in [ContextKind::Causal, ContextKind::NonCausal] {
                rec.push(opt(grid.cell(b, r, k).map(|c| c.report.kl_bits)));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub window_len: usize,
    pub causal: Comparison,
    pub noncausal_minus_causal: Comparison,
    pub middle_a: f64,
    pub middle_b: f64,
}

/// Two corpora compared window by window: which is more predictable under
/// causal contexts and under the non-causal aggregate, and by what margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub format: String,
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<SummaryRow>,
}

fn winner_label<'a>(c: &Comparison, a: &'a str, b: &'a str) -> &'a str {
    match c.more_predictable {
        Winner::A => a,
        Winner::B => b,
        Winner::Tie => "tie",
    }
}

impl ComparisonSummary {
    fn cell(&self, c: &Comparison) -> String {
        match c.more_predictable {
            Winner::Tie => "tie".to_string(),
            _ => format!(
                "{} (+{:.2}%)",
                winner_label(c, &self.label_a, &self.label_b),
                c.margin_pct
            ),
        }
    }

    /// "Highest predictability" table: one line per window length.
    pub fn render(&self) -> String {
        let rows: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    format!("N={}", r.window_len),
                    self.cell(&r.causal),
                    self.cell(&r.noncausal_minus_causal),
                ]
            })
            .collect();
        let head = [
            "Context length".to_string(),
            "causal".to_string(),
            "non-causal minus causal".to_string(),
        ];
        let widths: Vec<usize> = (0..3)
            .map(|i| rows.iter().map(|r| r[i].len()).chain([head[i].len()]).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for line in std::iter::once(&head).chain(&rows) {
            for (i, cell) in line.iter().enumerate() {
                s.push_str(&format!("{cell:<w$}  ", w = widths[i]));
            }
            s.truncate(s.trim_end().len());
            s.push('\n');
        }
        s
    }
}

pub fn write_summary_csv<W: Write>(summary: &ComparisonSummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_CSV_COLUMNS)?;
    let (a, b) = (summary.label_a.as_str(), summary.label_b.as_str());
    for r in &summary.rows {
        w.write_record([
            r.window_len.to_string(),
            r.causal.entropy_a.to_string(),
            r.causal.entropy_b.to_string(),
            winner_label(&r.causal, a, b).to_string(),
            r.causal.margin_pct.to_string(),
            r.noncausal_minus_causal.entropy_a.to_string(),
            r.noncausal_minus_causal.entropy_b.to_string(),
            winner_label(&r.noncausal_minus_causal, a, b).to_string(),
            r.noncausal_minus_causal.margin_pct.to_string(),
            r.middle_a.to_string(),
            r.middle_b.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON sidecar describing a generated batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSidecar {
    pub format: String,
    pub mode: GenerationMode,
    pub config: GenerationConfig,
    pub count: usize,
    pub model: String,
    pub training_corpus_sha256: String,
    pub model_calls_per_sequence: usize,
    pub total_model_calls: usize,
    pub fallback_events: usize,
}
