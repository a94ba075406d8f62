//! Average context-conditioned entropy and the analyses built on it.
//!
//! All entropies are in bits. The average over contexts is weighted by the
//! plug-in context probability `L_i / L`.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TagAlphabet, TagCorpus, TagId};
use crate::counts::{self, required_tokens, ContextSpec, CountError, CountTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Count(#[from] CountError),
    #[error("position sweep needs a window of at least 2 tags, got {0}")]
    WindowTooShort(usize),
    #[error("incomplete position sweep: {0}")]
    IncompleteSweep(String),
}

/// Default entropy threshold for pattern mining: log2(3).
pub const DEFAULT_PATTERN_THRESHOLD: f64 = 1.584_962_500_721_156;
pub const DEFAULT_MIN_CONTEXT_COUNT: u64 = 100;
pub const DEFAULT_TARGET_NORM_VARIANCE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyOptions {
    /// Keep one row per observed context in the report.
    pub per_context: bool,
    /// Also report the Miller–Madow bias-corrected average.
    pub miller_madow: bool,
    /// Normalized variance used for the data-sufficiency estimate.
    pub target_norm_variance: f64,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self {
            per_context: false,
            miller_madow: false,
            target_norm_variance: DEFAULT_TARGET_NORM_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntropy {
    pub context: Vec<TagId>,
    pub entropy_bits: f64,
    pub context_prob: f64,
    pub count: u64,
    pub argmax: TagId,
    pub max_prob: f64,
}

/// Tokens the estimators would need at the target variance, next to what was seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sufficiency {
    pub target_norm_variance: f64,
    pub required_context_tokens: u64,
    pub required_outcome_tokens: u64,
    pub actual_windows: u64,
}

impl Sufficiency {
    pub fn new(alphabet_size: usize, window_len: usize, target: f64, actual_windows: u64) -> Self {
        let (ctx, out) = required_tokens(alphabet_size, window_len, target);
        Self {
            target_norm_variance: target,
            required_context_tokens: ctx,
            required_outcome_tokens: out,
            actual_windows,
        }
    }

    pub fn context_sufficient(&self) -> bool {
        self.actual_windows >= self.required_context_tokens
    }

    pub fn outcome_sufficient(&self) -> bool {
        self.actual_windows >= self.required_outcome_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub spec: ContextSpec,
    pub avg_entropy_bits: f64,
    pub windows_used: u64,
    pub contexts_observed: usize,
    pub sufficiency: Sufficiency,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub miller_madow_bits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_context: Option<Vec<ContextEntropy>>,
}

pub fn avg_conditional_entropy(table: &CountTable) -> Result<EntropyReport, AnalysisError> {
    avg_conditional_entropy_with(table, &EntropyOptions::default())
}

pub fn avg_conditional_entropy_with(
    table: &CountTable,
    opts: &EntropyOptions,
) -> Result<EntropyReport, AnalysisError> {
    if table.total() == 0 {
        return Err(CountError::EmptyTable.into());
    }
    let total = table.total() as f64;
    let mut avg = 0.0;
    let mut corrected = 0.0;
    let mut rows = opts.per_context.then(|| Vec::with_capacity(table.len()));
    for entry in table.iter() {
        let weight = entry.total as f64 / total;
        let h = entry.entropy_bits();
        avg += weight * h;
        if opts.miller_madow {
            let m = entry.support() as f64;
            corrected +=
                weight * (h + (m - 1.0) / (2.0 * entry.total as f64 * std::f64::consts::LN_2));
        }
        if let Some(rows) = rows.as_mut() {
            let (argmax, c) = entry.argmax();
            rows.push(ContextEntropy {
                context: table.decode(entry.key),
                entropy_bits: h,
                context_prob: weight,
                count: entry.total,
                argmax,
                max_prob: c as f64 / entry.total as f64,
            });
        }
    }
    let spec = table.spec();
    Ok(EntropyReport {
        spec,
        avg_entropy_bits: avg,
        windows_used: table.total(),
        contexts_observed: table.len(),
        sufficiency: Sufficiency::new(
            table.alphabet_size(),
            spec.window_len(),
            opts.target_norm_variance,
            table.total(),
        ),
        miller_madow_bits: opts.miller_madow.then_some(corrected),
        per_context: rows,
    })
}

/// One report per predicted position `k = 0..=window_len`, each from its own
/// counting pass. The last entry is the causal one.
pub fn position_sweep(corpus: &TagCorpus, window_len: usize) -> Result<Vec<EntropyReport>, AnalysisError> {
    position_sweep_with(corpus, window_len, &EntropyOptions::default())
}

pub fn position_sweep_with(
    corpus: &TagCorpus,
    window_len: usize,
    opts: &EntropyOptions,
) -> Result<Vec<EntropyReport>, AnalysisError> {
    if window_len < 2 {
        return Err(AnalysisError::WindowTooShort(window_len));
    }
    (0..=window_len)
        .into_par_iter()
        .map(|k| {
            let spec = ContextSpec::new(window_len, k)?;
            let table = counts::count(corpus, spec)?;
            avg_conditional_entropy_with(&table, opts)
        })
        .collect()
}

/// Unweighted mean entropy over the strictly non-causal positions
/// `k = 0..window_len` of a complete sweep.
pub fn noncausal_minus_causal(sweep: &[EntropyReport]) -> Result<f64, AnalysisError> {
    let Some(last) = sweep.last() else {
        return Err(AnalysisError::IncompleteSweep("empty sweep".into()));
    };
    let n = last.spec.window_len();
    if sweep.len() != n + 1 {
        return Err(AnalysisError::IncompleteSweep(format!(
            "expected {} entries for N={n}, got {}",
            n + 1,
            sweep.len()
        )));
    }
    for (k, r) in sweep.iter().enumerate() {
        if r.spec.window_len() != n || r.spec.predicted_pos() != k {
            return Err(AnalysisError::IncompleteSweep(format!(
                "entry {k} has spec {}",
                r.spec
            )));
        }
    }
    let sum: f64 = sweep[..n].iter().map(|r| r.avg_entropy_bits).sum();
    Ok(sum / n as f64)
}

/// A low-entropy context and its most probable outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub spec: ContextSpec,
    pub context: Vec<TagId>,
    pub argmax: TagId,
    pub max_prob: f64,
    pub entropy_bits: f64,
    pub context_count: u64,
}

impl PatternRow {
    /// Context tag names with `_` in the predicted slot, e.g. `(DET, _, ADP)`.
    pub fn render_context(&self, alphabet: &TagAlphabet) -> String {
        let k = self.spec.predicted_pos();
        let mut names: Vec<&str> = self.context.iter().map(|&t| alphabet.name(t)).collect();
        names.insert(k, "_");
        format!("({})", names.join(", "))
    }
}

/// Contexts seen at least `min_context_count` times whose outcome entropy is
/// below `threshold`, most predictable first.
pub fn mine_patterns(table: &CountTable, threshold: f64, min_context_count: u64) -> Vec<PatternRow> {
    let spec = table.spec();
    let mut rows: Vec<(u64, PatternRow)> = table
        .iter()
        .filter(|e| e.total >= min_context_count)
        .filter_map(|e| {
            let h = e.entropy_bits();
            (h < threshold).then(|| {
                let (argmax, c) = e.argmax();
                (
                    e.key,
                    PatternRow {
                        spec,
                        context: table.decode(e.key),
                        argmax,
                        max_prob: c as f64 / e.total as f64,
                        entropy_bits: h,
                        context_count: e.total,
                    },
                )
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        a.1.entropy_bits
            .partial_cmp(&b.1.entropy_bits)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    rows.into_iter().map(|(_, r)| r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
}

/// Which of two entropies is lower, and by how much the higher one exceeds
/// it in percent: `100 (H_hi - H_lo) / H_lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entropy_a: f64,
    pub entropy_b: f64,
    pub more_predictable: Winner,
    pub margin_pct: f64,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.more_predictable {
            Winner::Tie => write!(f, "tie"),
            Winner::A => write!(f, "A (+{:.2}%)", self.margin_pct),
            Winner::B => write!(f, "B (+{:.2}%)", self.margin_pct),
        }
    }
}

pub fn compare_entropies(entropy_a: f64, entropy_b: f64) -> Comparison {
    let (winner, lo, hi) = match entropy_a.partial_cmp(&entropy_b) {
        Some(Ordering::Less) => (Winner::A, entropy_a, entropy_b),
        Some(Ordering::Greater) => (Winner::B, entropy_b, entropy_a),
        _ => (Winner::Tie, entropy_a, entropy_b),
    };
    let margin_pct = if winner == Winner::Tie {
        0.0
    } else {
        100.0 * (hi - lo) / lo
    };
    Comparison {
        entropy_a,
        entropy_b,
        more_predictable: winner,
        margin_pct,
    }
}

pub fn compare_languages(
    report_a: &EntropyReport,
    report_b: &EntropyReport,
) -> Result<Comparison, AnalysisError> {
    if report_a.spec != report_b.spec {
        return Err(CountError::SpecMismatch.into());
    }
    Ok(compare_entropies(
        report_a.avg_entropy_bits,
        report_b.avg_entropy_bits,
    ))
}
