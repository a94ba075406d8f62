//! Context/outcome count tables.
//!
//! A window of `window_len + 1` consecutive tags is split into a context (every
//! position except the predicted one) and an outcome (the tag at
//! `predicted_pos`). Tallying all in-sentence windows gives the plug-in
//! estimators `L_i / L` for context probabilities and `L_ij / L_i` for
//! outcome distributions.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TagAlphabet, TagCorpus, TagId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountError {
    #[error("invalid context spec: {0}")]
    InvalidSpec(String),
    #[error("count tables have different specs or alphabets")]
    SpecMismatch,
    #[error("no sentence is long enough for a window of {0} tags")]
    NoWindows(usize),
    #[error("count table is empty")]
    EmptyTable,
    #[error("context has not been observed")]
    UnseenContext,
    #[error("context has {got} tags, expected {expected}")]
    ContextLength { expected: usize, got: usize },
    #[error("tag {0} is outside the alphabet")]
    TagOutOfRange(TagId),
    #[error("context space {size}^{len} does not fit in 64 bits")]
    ContextSpaceTooLarge { size: usize, len: usize },
    #[error("malformed count table: {0}")]
    Malformed(String),
}

/// Window length and placement of the predicted tag.
///
/// `predicted_pos` is the number of context tags to the left of the
/// predicted tag: `predicted_pos == window_len` is the causal (left-only)
/// context, anything smaller places `window_len - predicted_pos` tags to the
/// right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ContextSpec {
    window_len: usize,
    predicted_pos: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    window_len: usize,
    predicted_pos: usize,
}

impl TryFrom<RawSpec> for ContextSpec {
    type Error = CountError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        ContextSpec::new(raw.window_len, raw.predicted_pos)
    }
}

impl From<ContextSpec> for RawSpec {
    fn from(s: ContextSpec) -> Self {
        RawSpec {
            window_len: s.window_len,
            predicted_pos: s.predicted_pos,
        }
    }
}

impl ContextSpec {
    pub fn new(window_len: usize, predicted_pos: usize) -> Result<Self, CountError> {
        if window_len == 0 {
            return Err(CountError::InvalidSpec("window length must be at least 1".into()));
        }
        if predicted_pos > window_len {
            return Err(CountError::InvalidSpec(format!(
                "predicted position {predicted_pos} exceeds window length {window_len}"
            )));
        }
        Ok(Self {
            window_len,
            predicted_pos,
        })
    }

    /// Left-only context of `window_len` tags.
    pub fn causal(window_len: usize) -> Result<Self, CountError> {
        Self::new(window_len, window_len)
    }

    /// Predicted tag in the middle; odd windows keep the extra tag on the left.
    pub fn middle(window_len: usize) -> Result<Self, CountError> {
        Self::new(window_len, window_len.div_ceil(2))
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn predicted_pos(&self) -> usize {
        self.predicted_pos
    }

    pub fn left_len(&self) -> usize {
        self.predicted_pos
    }

    pub fn right_len(&self) -> usize {
        self.window_len - self.predicted_pos
    }

    pub fn is_causal(&self) -> bool {
        self.predicted_pos == self.window_len
    }

    /// Column labels for the context positions relative to the predicted tag,
    /// e.g. `X_{i-1}`, `X_{i+1}` for a two-tag middle window.
    pub fn context_labels(&self) -> Vec<String> {
        let left = (1..=self.left_len()).rev().map(|d| format!("X_{{i-{d}}}"));
        let right = (1..=self.right_len()).map(|d| format!("X_{{i+{d}}}"));
        left.chain(right).collect()
    }
}

impl fmt::Display for ContextSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={},k={}", self.window_len, self.predicted_pos)
    }
}

/// Packed context key: the context tags read as a big-endian base-|V|
/// number, so key order is lexicographic tuple order.
pub type ContextKey = u64;

/// Encodes a context tuple. Fails if the tuple length or a tag is invalid.
pub fn encode_context(ctx: &[TagId], alphabet_size: usize) -> Result<ContextKey, CountError> {
    let mut key: u64 = 0;
    for &t in ctx {
        if t as usize >= alphabet_size {
            return Err(CountError::TagOutOfRange(t));
        }
        key = key * alphabet_size as u64 + t as u64;
    }
    Ok(key)
}

pub fn decode_context(mut key: ContextKey, len: usize, alphabet_size: usize) -> Vec<TagId> {
    let base = alphabet_size as u64;
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (key % base) as TagId;
        key /= base;
    }
    out
}

fn check_context_space(alphabet_size: usize, len: usize) -> Result<(), CountError> {
    (alphabet_size as u64)
        .checked_pow(len as u32)
        .map(|_| ())
        .ok_or(CountError::ContextSpaceTooLarge {
            size: alphabet_size,
            len,
        })
}

/// One observed context and its outcome counts.
#[derive(Debug, Clone, Copy)]
pub struct ContextEntry<'a> {
    pub key: ContextKey,
    /// `L_i`
    pub total: u64,
    /// `L_ij` for every outcome `j`.
    pub counts: &'a [u64],
}

impl ContextEntry<'_> {
    /// Most frequent outcome; ties go to the lowest tag index.
    pub fn argmax(&self) -> (TagId, u64) {
        let mut best = (0, 0);
        for (j, &c) in self.counts.iter().enumerate() {
            if c > best.1 {
                best = (j as TagId, c);
            }
        }
        best
    }

    /// Plug-in entropy of the outcome distribution, in bits.
    pub fn entropy_bits(&self) -> f64 {
        let total = self.total as f64;
        self.counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let c = c as f64;
                (c / total) * (total / c).log2()
            })
            .sum()
    }

    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Outcome counts per context, stored column-wise and sorted by key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    spec: ContextSpec,
    alphabet_size: usize,
    keys: Vec<ContextKey>,
    context_totals: Vec<u64>,
    /// Row-major `keys.len() × alphabet_size`.
    outcome_counts: Vec<u64>,
    total: u64,
}

impl CountTable {
    pub fn empty(spec: ContextSpec, alphabet_size: usize) -> Self {
        Self {
            spec,
            alphabet_size,
            keys: Vec::new(),
            context_totals: Vec::new(),
            outcome_counts: Vec::new(),
            total: 0,
        }
    }

    pub fn spec(&self) -> ContextSpec {
        self.spec
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Number of windows counted (`Σ L_i`).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct observed contexts.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn entry_at(&self, i: usize) -> ContextEntry<'_> {
        let v = self.alphabet_size;
        ContextEntry {
            key: self.keys[i],
            total: self.context_totals[i],
            counts: &self.outcome_counts[i * v..(i + 1) * v],
        }
    }

    /// Observed contexts in key order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = ContextEntry<'_>> + '_ {
        (0..self.keys.len()).map(move |i| self.entry_at(i))
    }

    pub fn get_key(&self, key: ContextKey) -> Option<ContextEntry<'_>> {
        self.keys.binary_search(&key).ok().map(|i| self.entry_at(i))
    }

    pub fn encode(&self, ctx: &[TagId]) -> Result<ContextKey, CountError> {
        if ctx.len() != self.spec.window_len {
            return Err(CountError::ContextLength {
                expected: self.spec.window_len,
                got: ctx.len(),
            });
        }
        encode_context(ctx, self.alphabet_size)
    }

    pub fn decode(&self, key: ContextKey) -> Vec<TagId> {
        decode_context(key, self.spec.window_len, self.alphabet_size)
    }

    pub fn get(&self, ctx: &[TagId]) -> Result<Option<ContextEntry<'_>>, CountError> {
        Ok(self.get_key(self.encode(ctx)?))
    }

    fn check_compatible(&self, other: &CountTable) -> Result<(), CountError> {
        if self.spec != other.spec || self.alphabet_size != other.alphabet_size {
            Err(CountError::SpecMismatch)
        } else {
            Ok(())
        }
    }

    fn from_sorted_rows(
        spec: ContextSpec,
        alphabet_size: usize,
        rows: Vec<(ContextKey, Vec<u64>)>,
    ) -> Self {
        let mut table = Self::empty(spec, alphabet_size);
        table.keys.reserve(rows.len());
        table.outcome_counts.reserve(rows.len() * alphabet_size);
        for (key, counts) in rows {
            let t: u64 = counts.iter().sum();
            table.keys.push(key);
            table.context_totals.push(t);
            table.outcome_counts.extend_from_slice(&counts);
            table.total += t;
        }
        table
    }
}

/// Counts windows in a slice of sentences without any parallelism. Returns an
/// empty table when no sentence is long enough.
pub fn count_sentences(
    sentences: &[Vec<TagId>],
    spec: ContextSpec,
    alphabet_size: usize,
) -> Result<CountTable, CountError> {
    check_context_space(alphabet_size, spec.window_len)?;
    let width = spec.window_len + 1;
    let k = spec.predicted_pos;
    let base = alphabet_size as u64;
    let mut slots: HashMap<ContextKey, usize> = HashMap::new();
    let mut arena: Vec<u64> = Vec::new();
    for sentence in sentences {
        if sentence.len() < width {
            continue;
        }
        for window in sentence.windows(width) {
            let mut key = 0u64;
            for (p, &t) in window.iter().enumerate() {
                if p != k {
                    key = key * base + t as u64;
                }
            }
            let outcome = window[k] as usize;
            if outcome >= alphabet_size {
                return Err(CountError::TagOutOfRange(window[k]));
            }
            let slot = *slots.entry(key).or_insert_with(|| {
                arena.resize(arena.len() + alphabet_size, 0);
                arena.len() / alphabet_size - 1
            });
            arena[slot * alphabet_size + outcome] += 1;
        }
    }
    let mut rows: Vec<(ContextKey, Vec<u64>)> = slots
        .into_iter()
        .map(|(key, slot)| {
            (
                key,
                arena[slot * alphabet_size..(slot + 1) * alphabet_size].to_vec(),
            )
        })
        .collect();
    rows.sort_unstable_by_key(|r| r.0);
    Ok(CountTable::from_sorted_rows(spec, alphabet_size, rows))
}

/// Sentences per parallel counting shard.
const SHARD_SENTENCES: usize = 4096;

/// Counts every in-sentence window of the corpus, sharding across threads.
pub fn count(corpus: &TagCorpus, spec: ContextSpec) -> Result<CountTable, CountError> {
    let size = corpus.alphabet().size();
    let table = corpus
        .sentences()
        .par_chunks(SHARD_SENTENCES)
        .map(|chunk| count_sentences(chunk, spec, size))
        .try_reduce(
            || CountTable::empty(spec, size),
            |a, b| merge(&a, &b),
        )?;
    if table.total == 0 {
        return Err(CountError::NoWindows(spec.window_len + 1));
    }
    Ok(table)
}

/// Pointwise sum of two tables with the same spec and alphabet size.
pub fn merge(a: &CountTable, b: &CountTable) -> Result<CountTable, CountError> {
    a.check_compatible(b)?;
    let v = a.alphabet_size;
    let mut out = CountTable::empty(a.spec, v);
    out.keys.reserve(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a.keys[i] <= b.keys[j]);
        let take_b = i >= a.len() || (j < b.len() && b.keys[j] <= a.keys[i]);
        let key = if take_a { a.keys[i] } else { b.keys[j] };
        let start = out.outcome_counts.len();
        out.outcome_counts.resize(start + v, 0);
        let row = &mut out.outcome_counts[start..];
        let mut t = 0;
        if take_a {
            for (dst, &src) in row.iter_mut().zip(&a.outcome_counts[i * v..(i + 1) * v]) {
                *dst += src;
            }
            t += a.context_totals[i];
            i += 1;
        }
        if take_b {
            for (dst, &src) in row.iter_mut().zip(&b.outcome_counts[j * v..(j + 1) * v]) {
                *dst += src;
            }
            t += b.context_totals[j];
            j += 1;
        }
        out.keys.push(key);
        out.context_totals.push(t);
    }
    out.total = a.total + b.total;
    Ok(out)
}

/// `L_i / L`; zero for contexts that were never observed.
pub fn context_prob(table: &CountTable, ctx: &[TagId]) -> Result<f64, CountError> {
    if table.total == 0 {
        return Err(CountError::EmptyTable);
    }
    Ok(table
        .get(ctx)?
        .map_or(0.0, |e| e.total as f64 / table.total as f64))
}

/// `L_ij / L_i` over every outcome `j`.
pub fn outcome_dist(table: &CountTable, ctx: &[TagId]) -> Result<Vec<f64>, CountError> {
    let entry = table.get(ctx)?.ok_or(CountError::UnseenContext)?;
    let t = entry.total as f64;
    Ok(entry.counts.iter().map(|&c| c as f64 / t).collect())
}

/// Tokens needed for the context and outcome estimators to reach a given
/// normalized variance under uniform distributions:
/// `((|V|^N - 1) / v, |V|^N (|V| - 1) / v)`, rounded up.
///
/// Saturates at `u64::MAX`. Panics unless `target_norm_variance > 0`.
pub fn required_tokens(alphabet_size: usize, window_len: usize, target_norm_variance: f64) -> (u64, u64) {
    assert!(
        target_norm_variance > 0.0,
        "target variance must be positive"
    );
    let contexts = (alphabet_size as u128).checked_pow(window_len as u32);
    let Some(contexts) = contexts else {
        return (u64::MAX, u64::MAX);
    };
    let ctx_num = contexts.saturating_sub(1);
    let out_num = contexts.saturating_mul((alphabet_size as u128).saturating_sub(1));
    (
        ceil_ratio(ctx_num, target_norm_variance),
        ceil_ratio(out_num, target_norm_variance),
    )
}

fn ceil_ratio(numerator: u128, v: f64) -> u64 {
    let x = numerator as f64 / v;
    if !x.is_finite() || x >= u64::MAX as f64 {
        return u64::MAX;
    }
    // 80 / 0.001 lands a few ulps away from 80000; snap before rounding up.
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

/// Versioned JSON form of a [`CountTable`].
#[derive(Debug, Serialize, Deserialize)]
pub struct CountTableFile {
    pub format: String,
    pub spec: ContextSpec,
    pub alphabet: Vec<String>,
    pub total: u64,
    /// Context tuples as tag IDs, left to right.
    pub contexts: Vec<Vec<TagId>>,
    /// Outcome counts, one row per context.
    pub counts: Vec<Vec<u64>>,
}

pub const COUNT_TABLE_FORMAT: &str = "predictalang.counts.v1";

impl CountTable {
    pub fn to_file(&self, alphabet: &TagAlphabet) -> CountTableFile {
        CountTableFile {
            format: COUNT_TABLE_FORMAT.to_string(),
            spec: self.spec,
            alphabet: alphabet.tags().to_vec(),
            total: self.total,
            contexts: self.keys.iter().map(|&k| self.decode(k)).collect(),
            counts: self.iter().map(|e| e.counts.to_vec()).collect(),
        }
    }

    pub fn to_json(&self, alphabet: &TagAlphabet) -> String {
        serde_json::to_string(&self.to_file(alphabet)).expect("count tables serialize")
    }

    /// Rebuilds a table and its alphabet, checking every header invariant.
    pub fn from_file(file: CountTableFile) -> Result<(CountTable, TagAlphabet), CountError> {
        if file.format != COUNT_TABLE_FORMAT {
            return Err(CountError::Malformed(format!("unknown format {}", file.format)));
        }
        let alphabet = TagAlphabet::from_names(file.alphabet)
            .map_err(|e| CountError::Malformed(e.to_string()))?;
        let v = alphabet.size();
        check_context_space(v, file.spec.window_len)?;
        if file.contexts.len() != file.counts.len() {
            return Err(CountError::Malformed("contexts and counts differ in length".into()));
        }
        let mut rows = Vec::with_capacity(file.contexts.len());
        for (ctx, counts) in file.contexts.into_iter().zip(file.counts) {
            if ctx.len() != file.spec.window_len {
                return Err(CountError::ContextLength {
                    expected: file.spec.window_len,
                    got: ctx.len(),
                });
            }
            if counts.len() != v {
                return Err(CountError::Malformed("outcome row has wrong width".into()));
            }
            if counts.iter().all(|&c| c == 0) {
                return Err(CountError::Malformed("context with zero count".into()));
            }
            rows.push((encode_context(&ctx, v)?, counts));
        }
        rows.sort_unstable_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CountError::Malformed("duplicate context".into()));
        }
        let table = CountTable::from_sorted_rows(file.spec, v, rows);
        if table.total != file.total {
            return Err(CountError::Malformed(format!(
                "header total {} does not match counts {}",
                file.total, table.total
            )));
        }
        Ok((table, alphabet))
    }

    pub fn from_json(json: &str) -> Result<(CountTable, TagAlphabet), CountError> {
        let file: CountTableFile =
            serde_json::from_str(json).map_err(|e| CountError::Malformed(e.to_string()))?;
        Self::from_file(file)
    }
}
