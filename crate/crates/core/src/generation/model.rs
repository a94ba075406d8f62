use crate::corpus::{TagCorpus, TagId};
use crate::counts::{self, ContextSpec, CountError, CountTable};

use super::filter::TokenInfo;

/// A model that fills masked positions of a sequence.
///
/// `predict` returns, for each index in `masked`, a distribution over the
/// `vocab_size()` real tokens. The mask sentinel is `vocab_size()` itself and
/// so never receives mass. Implementations must allow concurrent calls.
pub trait MaskedModel: Sync {
    fn vocab_size(&self) -> usize;

    fn mask_id(&self) -> TagId {
        self.vocab_size() as TagId
    }

    fn predict(&self, sequence: &[TagId], masked: &[usize]) -> Vec<Vec<f64>>;

    fn token_info(&self) -> TokenInfo<'_> {
        TokenInfo::tags()
    }

    /// Short description recorded alongside generated batches.
    fn identity(&self) -> String;
}

/// Count-based masked model: looks up the first context spec in the backoff
/// order whose context is fully known around the position, then falls back to
/// the corpus unigram.
#[derive(Debug, Clone)]
pub struct NGramMaskedModel {
    alphabet_size: usize,
    backoff: Vec<CountTable>,
    floor: Vec<f64>,
}

impl NGramMaskedModel {
    /// Trains one table per spec, in the given order. Specs with no window in
    /// the corpus are left out.
    pub fn train(corpus: &TagCorpus, backoff_order: &[ContextSpec]) -> Result<Self, CountError> {
        let mut backoff = Vec::with_capacity(backoff_order.len());
        for &spec in backoff_order {
            match counts::count(corpus, spec) {
                Ok(t) => backoff.push(t),
                Err(CountError::NoWindows(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            alphabet_size: corpus.alphabet().size(),
            backoff,
            floor: corpus.unigram(),
        })
    }

    /// Bidirectional contexts of `side..=1` tags per side, then left-only,
    /// then right-only.
    pub fn noncausal(corpus: &TagCorpus, side: usize) -> Result<Self, CountError> {
        let side = side.max(1);
        let mut order = Vec::new();
        for s in (1..=side).rev() {
            order.push(ContextSpec::new(2 * s, s)?);
        }
        for s in (1..=side).rev() {
            order.push(ContextSpec::causal(s)?);
        }
        for s in (1..=side).rev() {
            order.push(ContextSpec::new(s, 0)?);
        }
        Self::train(corpus, &order)
    }

    /// Left contexts of `order..=1` tags only.
    pub fn causal(corpus: &TagCorpus, order: usize) -> Result<Self, CountError> {
        let specs = (1..=order.max(1))
            .rev()
            .map(ContextSpec::causal)
            .collect::<Result<Vec<_>, _>>()?;
        Self::train(corpus, &specs)
    }

    pub fn backoff_specs(&self) -> Vec<ContextSpec> {
        self.backoff.iter().map(CountTable::spec).collect()
    }

    pub fn floor(&self) -> &[f64] {
        &self.floor
    }

    /// Distribution for one position, plus which backoff level produced it
    /// (`None` for the unigram floor).
    pub fn predict_one(&self, sequence: &[TagId], position: usize) -> (Vec<f64>, Option<usize>) {
        let size = self.alphabet_size;
        let known = |t: TagId| (t as usize) < size;
        let mut ctx = Vec::new();
        for (level, table) in self.backoff.iter().enumerate() {
            let spec = table.spec();
            let (left, right) = (spec.left_len(), spec.right_len());
            if position < left || position + right >= sequence.len() {
                continue;
            }
            ctx.clear();
            ctx.extend_from_slice(&sequence[position - left..position]);
            ctx.extend_from_slice(&sequence[position + 1..=position + right]);
            if !ctx.iter().all(|&t| known(t)) {
                continue;
            }
            let Ok(key) = table.encode(&ctx) else { continue };
            if let Some(entry) = table.get_key(key) {
                let total = entry.total as f64;
                return (
                    entry.counts.iter().map(|&c| c as f64 / total).collect(),
                    Some(level),
                );
            }
        }
        (self.floor.clone(), None)
    }
}

impl MaskedModel for NGramMaskedModel {
    fn vocab_size(&self) -> usize {
        self.alphabet_size
    }

    fn predict(&self, sequence: &[TagId], masked: &[usize]) -> Vec<Vec<f64>> {
        masked
            .iter()
            .map(|&p| self.predict_one(sequence, p).0)
            .collect()
    }

    fn identity(&self) -> String {
        let specs: Vec<String> = self.backoff.iter().map(|t| t.spec().to_string()).collect();
        format!("ngram-backoff[{}]+unigram", specs.join(";"))
    }
}
