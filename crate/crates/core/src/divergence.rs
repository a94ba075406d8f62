//! Conditional relative entropy between a reference table `p` and an
//! evaluated table `q`:
//!
//! ```text
//! D = Σ_x q(x) Σ_x̂ p(x̂|x) log2( p(x̂|x) / q(x̂|x) )
//! ```
//!
//! The outer weights come from the evaluated table. Both conditionals are
//! additively smoothed by `alpha` over the full outcome alphabet.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counts::{ContextEntry, ContextSpec, CountError, CountTable};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error(transparent)]
    Count(#[from] CountError),
    #[error("smoothing constant must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
}

/// Which table supplies the outer context weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterWeighting {
    /// `q(x)`, from the evaluated sequences.
    #[default]
    Evaluated,
    /// `p(x)`, from the reference; the textbook conditional KL.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceOptions {
    pub alpha: f64,
    pub weighting: OuterWeighting,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            weighting: OuterWeighting::Evaluated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub spec: ContextSpec,
    pub kl_bits: f64,
    /// Weighted contexts that were also observed in the other table.
    pub contexts_scored: usize,
    /// Weighted contexts missing from the other table. With `alpha > 0` they
    /// are scored against a uniform conditional; with `alpha == 0` they are
    /// left out of the sum.
    pub contexts_skipped: usize,
    pub smoothing_alpha: f64,
    pub weighting: OuterWeighting,
    /// Outcome terms with `p > 0` and `q = 0`. Only possible when
    /// `alpha == 0`; `p` is then renormalized over the outcomes `q` supports.
    pub unbounded_terms: usize,
}

pub fn conditional_relative_entropy(
    reference: &CountTable,
    evaluated: &CountTable,
    alpha: f64,
) -> Result<DivergenceReport, DivergenceError> {
    conditional_relative_entropy_with(
        reference,
        evaluated,
        &DivergenceOptions {
            alpha,
            ..Default::default()
        },
    )
}

fn smoothed(entry: Option<&ContextEntry<'_>>, alpha: f64, size: usize, out: &mut [f64]) {
    match entry {
        Some(e) => {
            let denom = e.total as f64 + alpha * size as f64;
            for (o, &c) in out.iter_mut().zip(e.counts) {
                *o = (c as f64 + alpha) / denom;
            }
        }
        None => out.fill(1.0 / size as f64),
    }
}

pub fn conditional_relative_entropy_with(
    reference: &CountTable,
    evaluated: &CountTable,
    opts: &DivergenceOptions,
) -> Result<DivergenceReport, DivergenceError> {
    let alpha = opts.alpha;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(DivergenceError::InvalidAlpha(alpha));
    }
    if reference.spec() != evaluated.spec() || reference.alphabet_size() != evaluated.alphabet_size()
    {
        return Err(CountError::SpecMismatch.into());
    }
    if reference.total() == 0 || evaluated.total() == 0 {
        return Err(CountError::EmptyTable.into());
    }
    let (outer, other) = match opts.weighting {
        OuterWeighting::Evaluated => (evaluated, reference),
        OuterWeighting::Reference => (reference, evaluated),
    };
    let size = reference.alphabet_size();
    let outer_total = outer.total() as f64;
    let mut p = vec![0.0; size];
    let mut q = vec![0.0; size];
    let mut report = DivergenceReport {
        spec: reference.spec(),
        kl_bits: 0.0,
        contexts_scored: 0,
        contexts_skipped: 0,
        smoothing_alpha: alpha,
        weighting: opts.weighting,
        unbounded_terms: 0,
    };
    for entry in outer.iter() {
        let matched = other.get_key(entry.key);
        if matched.is_some() {
            report.contexts_scored += 1;
        } else {
            report.contexts_skipped += 1;
            if alpha == 0.0 {
                continue;
            }
        }
        let (ref_entry, eval_entry) = match opts.weighting {
            OuterWeighting::Evaluated => (matched, Some(entry)),
            OuterWeighting::Reference => (Some(entry), matched),
        };
        smoothed(ref_entry.as_ref(), alpha, size, &mut p);
        smoothed(eval_entry.as_ref(), alpha, size, &mut q);
        // Mass of p on outcomes that q also supports; below 1 only when alpha == 0.
        let mut mass = 0.0;
        for (&pj, &qj) in p.iter().zip(&q) {
            if pj > 0.0 && qj == 0.0 {
                report.unbounded_terms += 1;
            } else if qj > 0.0 {
                mass += pj;
            }
        }
        let mut inner = 0.0;
        if mass > 0.0 {
            for (&pj, &qj) in p.iter().zip(&q) {
                if pj > 0.0 && qj > 0.0 {
                    let pr = pj / mass;
                    inner += pr * (pr / qj).log2();
                }
            }
        }
        report.kl_bits += entry.total as f64 / outer_total * inner;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_tagstream, TagAlphabet};
    use crate::counts::count;
    use std::sync::Arc;

    fn table(text: &str) -> CountTable {
        let a = Arc::new(TagAlphabet::from_names(["A", "B"]).unwrap());
        let c = read_tagstream(text.as_bytes(), a).unwrap();
        count(&c, ContextSpec::causal(1).unwrap()).unwrap()
    }

    #[test]
    fn zero_on_self() {
        let t = table("A B B A A B A\nB B A\n");
        for alpha in [0.0, 0.5, 3.0] {
            let r = conditional_relative_entropy(&t, &t, alpha).unwrap();
            assert!(r.kl_bits.abs() < 1e-12);
            assert_eq!(r.contexts_skipped, 0);
            assert_eq!(r.contexts_scored, t.len());
        }
    }

    #[test]
    fn two_outcome_hand_value() {
        // Reference: A -> {B: 2}. Evaluated: A -> {A: 1, B: 1}.
        let reference = table("A B\nA B\n");
        let evaluated = table("A A\nA B\n");
        // alpha = 0.5, |V| = 2: p = (0.5/3, 2.5/3), q = (1.5/3, 1.5/3).
        let p = [0.5f64 / 3.0, 2.5 / 3.0];
        let q = [0.5f64, 0.5];
        let expected: f64 = p.iter().zip(q).map(|(a, b)| a * (a / b).log2()).sum();
        let r = conditional_relative_entropy(&reference, &evaluated, 0.5).unwrap();
        assert!((r.kl_bits - expected).abs() < 1e-15);

        // alpha = 0: p(A|A) = 0 contributes nothing, p(B|A) = 1 vs q = 0.5.
        let r = conditional_relative_entropy(&reference, &evaluated, 0.0).unwrap();
        assert!((r.kl_bits - 1.0).abs() < 1e-15);
        assert_eq!(r.unbounded_terms, 0);

        // Swapped: p = {A: .5, B: .5} against q = {B: 1} has an unbounded term.
        // Renormalized over q's support, p becomes {B: 1}, matching q.
        let r = conditional_relative_entropy(&evaluated, &reference, 0.0).unwrap();
        assert_eq!(r.unbounded_terms, 1);
        assert_eq!(r.kl_bits, 0.0);
    }

    #[test]
    fn unseen_reference_context() {
        let reference = table("A A A\n");
        let evaluated = table("B A\nA A\n");
        let r = conditional_relative_entropy(&reference, &evaluated, 0.5).unwrap();
        assert_eq!(r.contexts_scored, 1);
        assert_eq!(r.contexts_skipped, 1);
        assert!(r.kl_bits > 0.0);
        let r0 = conditional_relative_entropy(&reference, &evaluated, 0.0).unwrap();
        assert_eq!(r0.contexts_skipped, 1);
        // Only context A is scored: p = {A: 1}, q = {A: 1}.
        assert_eq!(r0.kl_bits, 0.0);
    }

    #[test]
    fn reference_weighting_variant() {
        let reference = table("A B A A B\n");
        let evaluated = table("A A A B\n");
        let opts = DivergenceOptions {
            alpha: 0.5,
            weighting: OuterWeighting::Reference,
        };
        let r = conditional_relative_entropy_with(&reference, &evaluated, &opts).unwrap();
        assert_eq!(r.weighting, OuterWeighting::Reference);
        assert!(r.kl_bits > 0.0);
        assert_eq!(r.contexts_scored + r.contexts_skipped, reference.len());
    }

    #[test]
    fn errors() {
        let t = table("A B\n");
        assert_eq!(
            conditional_relative_entropy(&t, &t, -1.0),
            Err(DivergenceError::InvalidAlpha(-1.0))
        );
        let empty = CountTable::empty(t.spec(), 2);
        assert_eq!(
            conditional_relative_entropy(&t, &empty, 0.5),
            Err(DivergenceError::Count(CountError::EmptyTable))
        );
        let other = CountTable::empty(ContextSpec::new(1, 0).unwrap(), 2);
        assert_eq!(
            conditional_relative_entropy(&t, &other, 0.5),
            Err(DivergenceError::Count(CountError::SpecMismatch))
        );
    }
}
