//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the counting or entropy code under test.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use predictalang::corpus::{TagAlphabet, TagCorpus, TagId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Context tuple -> outcome counts, built by walking every window directly.
pub type OracleTable = BTreeMap<Vec<TagId>, Vec<u64>>;

pub fn oracle_counts(sentences: &[Vec<TagId>], n: usize, k: usize, v: usize) -> OracleTable {
    let mut out = OracleTable::new();
    for s in sentences {
        if s.len() < n + 1 {
            continue;
        }
        for start in 0..=s.len() - (n + 1) {
            let w = &s[start..start + n + 1];
            let ctx: Vec<TagId> = (0..=n).filter(|&p| p != k).map(|p| w[p]).collect();
            out.entry(ctx).or_insert_with(|| vec![0; v])[w[k] as usize] += 1;
        }
    }
    out
}

pub fn oracle_total(t: &OracleTable) -> u64 {
    t.values().map(|c| c.iter().sum::<u64>()).sum()
}

/// Entropy in bits via natural logs, `0 log 0 = 0`.
pub fn oracle_row_entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n as f64;
            h -= p * p.ln();
        }
    }
    h / std::f64::consts::LN_2
}

pub fn oracle_avg_entropy(t: &OracleTable) -> f64 {
    let total = oracle_total(t) as f64;
    t.values()
        .map(|c| c.iter().sum::<u64>() as f64 / total * oracle_row_entropy(c))
        .sum()
}

/// (context, argmax, max_prob, entropy) for contexts passing both filters,
/// in no particular order.
pub fn oracle_patterns(t: &OracleTable, threshold: f64, min_count: u64) -> Vec<(Vec<TagId>, TagId, f64, f64)> {
    let mut out = Vec::new();
    for (ctx, c) in t {
        let n: u64 = c.iter().sum();
        let h = oracle_row_entropy(c);
        if n >= min_count && h < threshold {
            let mut best = 0;
            for j in 1..c.len() {
                if c[j] > c[best] {
                    best = j;
                }
            }
            out.push((ctx.clone(), best as TagId, c[best] as f64 / n as f64, h));
        }
    }
    out
}

pub fn alphabet(v: usize) -> Arc<TagAlphabet> {
    Arc::new(TagAlphabet::from_names((0..v).map(|i| format!("T{i}"))).unwrap())
}

/// Sentences of length 1..=12 with at most `max_tokens` tags in total.
pub fn random_sentences(rng: &mut ChaCha8Rng, v: usize, max_tokens: usize) -> Vec<Vec<TagId>> {
    let target = rng.gen_range(1..=max_tokens);
    let mut out = Vec::new();
    let mut used = 0;
    while used < target {
        let len = rng.gen_range(1..=12).min(target - used);
        out.push((0..len).map(|_| rng.gen_range(0..v) as TagId).collect());
        used += len;
    }
    out
}

pub fn random_corpus(seed: u64, v: usize, max_tokens: usize) -> TagCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TagCorpus::new(random_sentences(&mut rng, v, max_tokens), alphabet(v)).unwrap()
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
pub fn stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..10_000 {
        let mut next = vec![0.0; n];
        for (i, row) in p.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                next[j] += pi[i] * pij;
            }
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

/// Σ_s π(s) H(row_s) in bits.
pub fn markov_entropy_rate(p: &[Vec<f64>]) -> f64 {
    let pi = stationary(p);
    let mut h = 0.0;
    for (s, row) in p.iter().enumerate() {
        let hs: f64 = row.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
        h += pi[s] * hs;
    }
    h
}

/// Conditional relative entropy straight from the definition, over tuple
/// keys, with additive smoothing `alpha > 0` and evaluated-table weights.
pub fn oracle_divergence(reference: &OracleTable, evaluated: &OracleTable, v: usize, alpha: f64) -> f64 {
    let total = oracle_total(evaluated) as f64;
    let smooth = |c: Option<&Vec<u64>>| -> Vec<f64> {
        match c {
            Some(c) => {
                let n: u64 = c.iter().sum();
                c.iter().map(|&x| (x as f64 + alpha) / (n as f64 + alpha * v as f64)).collect()
            }
            None => vec![1.0 / v as f64; v],
        }
    };
    let mut d = 0.0;
    for (ctx, c) in evaluated {
        let q = smooth(Some(c));
        let p = smooth(reference.get(ctx));
        let w = c.iter().sum::<u64>() as f64 / total;
        d += w * p.iter().zip(&q).map(|(a, b)| a * (a / b).log2()).sum::<f64>();
    }
    d
}
