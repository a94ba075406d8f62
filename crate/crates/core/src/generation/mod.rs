//! Iterative mask-and-fill generation and a left-to-right baseline.
//!
//! Non-causal generation starts from `seq_len` mask sentinels. Each iteration
//! shuffles the positions, then walks the shuffled order in groups of
//! `group_size`: the group is masked, the model is queried once, and every
//! masked position is re-sampled from its filtered distribution. Every
//! position is re-sampled exactly once per iteration, so one iteration costs
//! `ceil(seq_len / group_size)` model calls.

mod filter;
mod model;
mod sampling;

pub use filter::{filter_distribution, FilterSet, Filtered, TokenInfo, DEFAULT_MIN_AFFIX_LEN};
pub use model::{MaskedModel, NGramMaskedModel};
pub use sampling::{argmax, sample, GREEDY_TEMPERATURE};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TagId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("model returned {got} distributions for {expected} masked positions")]
    WrongDistributionCount { expected: usize, got: usize },
    #[error("model distribution for position {position} is not a probability vector over {vocab} tokens")]
    InvalidDistribution { position: usize, vocab: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    #[serde(rename = "noncausal")]
    NonCausal,
    Causal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Sequence length `K`.
    pub seq_len: usize,
    /// Mask-and-fill iterations `I`.
    pub iterations: usize,
    /// Positions masked per model call.
    pub group_size: usize,
    pub seed: u64,
    pub temperature: f64,
    pub filters: FilterSet,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seq_len: 50,
            iterations: 30,
            group_size: 2,
            seed: 0,
            temperature: 1.0,
            filters: FilterSet::all(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: String| Err(GenerationError::InvalidConfig(m));
        if self.seq_len == 0 {
            return bad("sequence length must be at least 1".into());
        }
        if self.group_size == 0 || self.group_size > self.seq_len {
            return bad(format!(
                "group size {} must be in 1..={}",
                self.group_size, self.seq_len
            ));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        Ok(())
    }

    /// Model calls one sequence costs in the given mode.
    pub fn expected_calls(&self, mode: GenerationMode) -> usize {
        match mode {
            GenerationMode::NonCausal => self.iterations * self.seq_len.div_ceil(self.group_size),
            GenerationMode::Causal => self.seq_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub model_calls: usize,
    pub sequence: Vec<TagId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub tokens: Vec<TagId>,
    pub trace: Vec<IterationTrace>,
    pub model_calls: usize,
    /// Positions where filtering removed all mass and the raw distribution was used.
    pub fallback_events: usize,
}

/// RNG for sequence `index` of a batch seeded with `seed`.
pub fn sequence_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Filler<'a, M: ?Sized> {
    model: &'a M,
    cfg: &'a GenerationConfig,
    rng: ChaCha8Rng,
    fallback_events: usize,
}

impl<M: MaskedModel + ?Sized> Filler<'_, M> {
    /// Queries the model once for `masked` and samples each position in turn.
    fn fill(&mut self, seq: &mut [TagId], masked: &[usize]) -> Result<(), GenerationError> {
        let vocab = self.model.vocab_size();
        let dists = self.model.predict(seq, masked);
        if dists.len() != masked.len() {
            return Err(GenerationError::WrongDistributionCount {
                expected: masked.len(),
                got: dists.len(),
            });
        }
        let info = self.model.token_info();
        for (&m, dist) in masked.iter().zip(&dists) {
            let sum: f64 = dist.iter().sum();
            if dist.len() != vocab
                || (sum - 1.0).abs() > 1e-6
                || dist.iter().any(|p| !(*p >= 0.0))
            {
                return Err(GenerationError::InvalidDistribution {
                    position: m,
                    vocab,
                });
            }
            let filtered = filter_distribution(dist, m, seq, &self.cfg.filters, &info);
            if filtered.fallback {
                self.fallback_events += 1;
            }
            seq[m] = sample(&filtered.dist, self.cfg.temperature, &mut self.rng);
        }
        Ok(())
    }
}

pub fn generate_noncausal<M: MaskedModel + ?Sized>(
    model: &M,
    cfg: &GenerationConfig,
) -> Result<Generation, GenerationError> {
    generate_with_rng(model, cfg, GenerationMode::NonCausal, sequence_rng(cfg.seed, 0))
}

/// Left-to-right sampling, one model call per position. Positions to the
/// right are still masked when each call is made.
pub fn generate_causal<M: MaskedModel + ?Sized>(
    model: &M,
    cfg: &GenerationConfig,
) -> Result<Generation, GenerationError> {
    generate_with_rng(model, cfg, GenerationMode::Causal, sequence_rng(cfg.seed, 0))
}

pub fn generate_with_rng<M: MaskedModel + ?Sized>(
    model: &M,
    cfg: &GenerationConfig,
    mode: GenerationMode,
    rng: ChaCha8Rng,
) -> Result<Generation, GenerationError> {
    cfg.validate()?;
    let k = cfg.seq_len;
    let mask = model.mask_id();
    let mut seq = vec![mask; k];
    let mut filler = Filler {
        model,
        cfg,
        rng,
        fallback_events: 0,
    };
    let mut trace = Vec::new();
    match mode {
        GenerationMode::NonCausal => {
            for iteration in 0..cfg.iterations {
                let mut order: Vec<usize> = (0..k).collect();
                order.shuffle(&mut filler.rng);
                let mut calls = 0;
                for group in order.chunks(cfg.group_size) {
                    for &m in group {
                        seq[m] = mask;
                    }
                    filler.fill(&mut seq, group)?;
                    calls += 1;
                }
                trace.push(IterationTrace {
                    iteration,
                    model_calls: calls,
                    sequence: seq.clone(),
                });
            }
        }
        GenerationMode::Causal => {
            for p in 0..k {
                filler.fill(&mut seq, &[p])?;
            }
            trace.push(IterationTrace {
                iteration: 0,
                model_calls: k,
                sequence: seq.clone(),
            });
        }
    }
    let model_calls = trace.iter().map(|t| t.model_calls).sum();
    Ok(Generation {
        tokens: seq,
        trace,
        model_calls,
        fallback_events: filler.fallback_events,
    })
}

/// `count` independent sequences; sequence `i` uses RNG stream `i` of
/// `cfg.seed`, so output does not depend on thread count.
pub fn generate_batch<M: MaskedModel + ?Sized>(
    model: &M,
    cfg: &GenerationConfig,
    mode: GenerationMode,
    count: usize,
) -> Result<Vec<Generation>, GenerationError> {
    cfg.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| generate_with_rng(model, cfg, mode, sequence_rng(cfg.seed, i as u64)))
        .collect()
}
