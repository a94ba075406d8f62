//! Synthetic tag corpora drawn from first-order Markov chains.
//!
//! The bundled demo corpus (`data/demo_corpus.tags`) is
//! `demo_corpus()` written in tag-stream form: 50 000 tokens from
//! [`DEMO_TRANSITIONS_PCT`] over the default nine-tag alphabet, cut into
//! sentences of 8 to 24 tags, seed [`DEMO_SEED`].

use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{default_reduction, IngestError, TagAlphabet, TagCorpus, TagId};
use crate::generation::sample;

/// Demo transition matrix in percent. Rows are the current tag, columns the
/// next tag, both in alphabet order:
///
/// ```text
///         ADJ ADP ADV CONJ DET NOUN PRON VERB OTHER
/// ADJ       5  10   3    8   2   50    2    5    15
/// ADP       5   2   3    1  55   20    8    4     2
/// ADV      15  10   5    3  10    2    5   35    15
/// CONJ      5   8   7    1  25   10   20   20     4
/// DET      15   1   2    1   2   75    1    1     2
/// NOUN     10  25   5   10   2    5    5   18    20
/// PRON      2   5   8    2   3    5   10   60     5
/// VERB      8  20  12    5  25    5    8    7    10
/// OTHER     5  10   8   12  20   10   15   10    10
/// ```
pub const DEMO_TRANSITIONS_PCT: [[u32; 9]; 9] = [
    [5, 10, 3, 8, 2, 50, 2, 5, 15],
    [5, 2, 3, 1, 55, 20, 8, 4, 2],
    [15, 10, 5, 3, 10, 2, 5, 35, 15],
    [5, 8, 7, 1, 25, 10, 20, 20, 4],
    [15, 1, 2, 1, 2, 75, 1, 1, 2],
    [10, 25, 5, 10, 2, 5, 5, 18, 20],
    [2, 5, 8, 2, 3, 5, 10, 60, 5],
    [8, 20, 12, 5, 25, 5, 8, 7, 10],
    [5, 10, 8, 12, 20, 10, 15, 10, 10],
];

pub const DEMO_SEED: u64 = 2024;
pub const DEMO_TOKENS: usize = 50_000;
pub const DEMO_SENTENCE_LEN: RangeInclusive<usize> = 8..=24;

/// Steps discarded before the first emitted tag.
const BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    transitions: Vec<Vec<f64>>,
}

impl MarkovChain {
    /// Rows must be non-negative with positive sums; they are normalized.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        let n = rows.len();
        if n == 0 {
            return Err("empty transition matrix".into());
        }
        let mut transitions = Vec::with_capacity(n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(format!("row {i} is not a valid distribution"));
            }
            transitions.push(row.iter().map(|p| p / sum).collect());
        }
        Ok(Self { transitions })
    }

    pub fn demo() -> Self {
        let rows = DEMO_TRANSITIONS_PCT
            .iter()
            .map(|r| r.iter().map(|&p| p as f64 / 100.0).collect())
            .collect();
        Self::new(rows).expect("demo matrix is valid")
    }

    /// Independent uniform draws over `n` tags.
    pub fn uniform(n: usize) -> Self {
        Self::new(vec![vec![1.0; n]; n]).expect("uniform matrix is valid")
    }

    pub fn states(&self) -> usize {
        self.transitions.len()
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    /// Draws `tokens` tags as one continuous chain, cut into sentences whose
    /// lengths are uniform over `sentence_len` (the last may be shorter).
    pub fn sample_corpus(
        &self,
        alphabet: Arc<TagAlphabet>,
        tokens: usize,
        sentence_len: RangeInclusive<usize>,
        seed: u64,
    ) -> Result<TagCorpus, IngestError> {
        if alphabet.size() != self.states() {
            return Err(IngestError::InvalidAlphabet(format!(
                "chain has {} states but alphabet has {} tags",
                self.states(),
                alphabet.size()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = rng.gen_range(0..self.states());
        for _ in 0..BURN_IN {
            state = sample(&self.transitions[state], 1.0, &mut rng) as usize;
        }
        let (lo, hi) = (*sentence_len.start(), *sentence_len.end());
        let mut sentences = Vec::new();
        let mut emitted = 0;
        while emitted < tokens {
            let len = rng.gen_range(lo.max(1)..=hi.max(lo).max(1)).min(tokens - emitted);
            let mut sentence = Vec::with_capacity(len);
            for _ in 0..len {
                state = sample(&self.transitions[state], 1.0, &mut rng) as usize;
                sentence.push(state as TagId);
            }
            emitted += len;
            sentences.push(sentence);
        }
        TagCorpus::new(sentences, alphabet)
    }
}

/// The bundled demo corpus, regenerated.
pub fn demo_corpus() -> TagCorpus {
    MarkovChain::demo()
        .sample_corpus(
            Arc::new(default_reduction()),
            DEMO_TOKENS,
            DEMO_SENTENCE_LEN,
            DEMO_SEED,
        )
        .expect("demo corpus is valid")
}
