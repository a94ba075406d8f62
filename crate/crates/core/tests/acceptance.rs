//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS or FAIL line; exits non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use predictalang::corpus::{default_reduction, TagCorpus, TagId};
use predictalang::counts::{
    context_prob, count, count_sentences, merge, outcome_dist, required_tokens, ContextSpec,
    CountTable,
};
use predictalang::divergence::conditional_relative_entropy;
use predictalang::generation::{
    generate_batch, GenerationConfig, GenerationMode, MaskedModel, NGramMaskedModel,
};
use predictalang::predictability::{
    avg_conditional_entropy, compare_entropies, mine_patterns, position_sweep, Winner,
    DEFAULT_PATTERN_THRESHOLD,
};
use predictalang::report::{ComparisonSummary, SummaryRow, SUMMARY_FORMAT};
use predictalang::synthetic::{demo_corpus, MarkovChain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Outcome {
    let elapsed = start.elapsed();
    ensure!(elapsed < limit, "took {:.1?}, limit {:.0?}", elapsed, limit);
    Ok(format!("{detail}; {elapsed:.1?}"))
}

// ------------------------------------------------------------------ 1

fn brute_force_equivalence() -> Outcome {
    let start = Instant::now();
    let mut checks = 0usize;
    for seed in 0..25u64 {
        let v = [2, 3, 4][seed as usize % 3];
        let corpus = random_corpus(1000 + seed, v, 500);
        ensure!(corpus.token_count() <= 500, "corpus too large");
        for n in 1..=3 {
            for k in 0..=n {
                let spec = ContextSpec::new(n, k).unwrap();
                let oracle = oracle_counts(corpus.sentences(), n, k, v);
                let table = match count(&corpus, spec) {
                    Ok(t) => t,
                    Err(_) => {
                        ensure!(oracle.is_empty(), "seed {seed} {spec}: no table but oracle has windows");
                        continue;
                    }
                };
                let total = oracle_total(&oracle);
                ensure!(table.total() == total, "seed {seed} {spec}: total");
                ensure!(table.len() == oracle.len(), "seed {seed} {spec}: context count");
                for (ctx, c) in &oracle {
                    let entry = table.get(ctx).unwrap();
                    ensure!(entry.map(|e| e.counts) == Some(c.as_slice()), "seed {seed} {spec}: counts");
                    let n_ctx: u64 = c.iter().sum();
                    ensure!(
                        context_prob(&table, ctx).unwrap() == n_ctx as f64 / total as f64,
                        "seed {seed} {spec}: context_prob"
                    );
                    let dist = outcome_dist(&table, ctx).unwrap();
                    for (d, &x) in dist.iter().zip(c) {
                        ensure!(*d == x as f64 / n_ctx as f64, "seed {seed} {spec}: outcome_dist");
                    }
                    checks += 1;
                }
                // An unseen context, when one exists.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..20 {
                    let ctx: Vec<TagId> = (0..n).map(|_| rng.gen_range(0..v) as TagId).collect();
                    if !oracle.contains_key(&ctx) {
                        ensure!(context_prob(&table, &ctx).unwrap() == 0.0, "unseen context_prob");
                        ensure!(outcome_dist(&table, &ctx).is_err(), "unseen outcome_dist");
                        break;
                    }
                }
                let h = avg_conditional_entropy(&table).unwrap().avg_entropy_bits;
                let h_oracle = oracle_avg_entropy(&oracle);
                ensure!((h - h_oracle).abs() <= 1e-9, "seed {seed} {spec}: entropy {h} vs {h_oracle}");

                for (threshold, min_count) in [(DEFAULT_PATTERN_THRESHOLD, 1), (1.0, 3), (0.5, 1)] {
                    let got = mine_patterns(&table, threshold, min_count);
                    // Contexts whose entropy sits within rounding of the threshold
                    // may fall either way; they must follow the reported entropy.
                    let near = |h: f64| (h - threshold).abs() <= 1e-9;
                    let want: Vec<_> = oracle_patterns(&oracle, threshold + 1e-9, min_count)
                        .into_iter()
                        .filter(|w| !near(w.3) || got.iter().any(|g| g.context == w.0))
                        .collect();
                    ensure!(got.len() == want.len(), "seed {seed} {spec}: pattern count");
                    for g in &got {
                        ensure!(g.entropy_bits < threshold, "pattern above threshold");
                    }
                    for w in &want {
                        let g = got.iter().find(|g| g.context == w.0);
                        let Some(g) = g else {
                            return Err(format!("seed {seed} {spec}: missing pattern {:?}", w.0));
                        };
                        ensure!(g.argmax == w.1 && g.max_prob == w.2, "seed {seed} {spec}: pattern argmax");
                        ensure!((g.entropy_bits - w.3).abs() <= 1e-9, "seed {seed} {spec}: pattern entropy");
                        ensure!(g.context_count == oracle[&w.0].iter().sum::<u64>(), "pattern count");
                    }
                    ensure!(
                        got.windows(2).all(|p| p[0].entropy_bits <= p[1].entropy_bits),
                        "patterns not sorted"
                    );
                }
            }
        }
    }
    within_time(
        start,
        Duration::from_secs(10),
        format!("25 corpora, {checks} contexts matched"),
    )
}

// ------------------------------------------------------------------ 2

fn analytic_entropy() -> Outcome {
    let start = Instant::now();
    let alphabet = Arc::new(default_reduction());
    let chain = MarkovChain::demo();
    let corpus = chain
        .sample_corpus(Arc::clone(&alphabet), 1_000_000, 8..=24, 7)
        .unwrap();
    let table = count(&corpus, ContextSpec::causal(1).unwrap()).unwrap();
    let h = avg_conditional_entropy(&table).unwrap().avg_entropy_bits;
    let h_true = markov_entropy_rate(chain.transitions());
    ensure!((h - h_true).abs() <= 0.01, "markov: {h:.4} vs analytic {h_true:.4}");

    let iid = MarkovChain::uniform(9)
        .sample_corpus(alphabet, 1_000_000, 8..=24, 8)
        .unwrap();
    let target = 9f64.log2();
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        for r in position_sweep(&iid, n).unwrap() {
            let d = (r.avg_entropy_bits - target).abs();
            ensure!(d <= 0.01, "iid {}: {:.4} vs {target:.4}", r.spec, r.avg_entropy_bits);
            worst = worst.max(d);
        }
    }
    within_time(
        start,
        Duration::from_secs(60),
        format!(
            "markov {h:.4} vs {h_true:.4} bits; iid sweeps N=2,3 max deviation {worst:.4} bits"
        ),
    )
}

// ------------------------------------------------------------------ 3

fn variance_formulas() -> Outcome {
    let got = required_tokens(9, 2, 0.001);
    ensure!(got == (80_000, 648_000), "got {got:?}");
    Ok(format!("required_tokens(9, 2, 0.001) = {got:?}"))
}

// ------------------------------------------------------------------ 4

fn sharded(corpus: &TagCorpus, spec: ContextSpec, shards: usize) -> CountTable {
    let s = corpus.sentences();
    let size = s.len().div_ceil(shards);
    let mut out = CountTable::empty(spec, corpus.alphabet().size());
    for chunk in s.chunks(size) {
        out = merge(&out, &count_sentences(chunk, spec, corpus.alphabet().size()).unwrap()).unwrap();
    }
    out
}

fn shard_invariance() -> Outcome {
    let corpus = MarkovChain::demo()
        .sample_corpus(Arc::new(default_reduction()), 1_000_000, 8..=24, 11)
        .unwrap();
    for spec in [ContextSpec::causal(2).unwrap(), ContextSpec::new(3, 1).unwrap()] {
        let one = sharded(&corpus, spec, 1);
        for shards in [4, 16] {
            ensure!(sharded(&corpus, spec, shards) == one, "{spec}: {shards} shards differ");
        }
        ensure!(count(&corpus, spec).unwrap() == one, "{spec}: parallel count differs");
        let h1 = avg_conditional_entropy(&one).unwrap().avg_entropy_bits;
        let h16 = avg_conditional_entropy(&sharded(&corpus, spec, 16)).unwrap().avg_entropy_bits;
        ensure!(h1.to_bits() == h16.to_bits(), "{spec}: entropy bits differ");
    }
    Ok(format!("{} tokens, 1/4/16 shards identical", corpus.token_count()))
}

// ------------------------------------------------------------------ 5

fn chain_corpus(rows: Vec<Vec<f64>>, tokens: usize, seed: u64) -> TagCorpus {
    MarkovChain::new(rows)
        .unwrap()
        .sample_corpus(Arc::new(default_reduction()), tokens, 8..=24, seed)
        .unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..9)
        .map(|_| (0..9).map(|_| rng.gen_range(0.0..1.0f64).powi(3) + 1e-3).collect())
        .collect()
}

fn divergence_properties() -> Outcome {
    let spec = ContextSpec::causal(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10 {
        let t = count(&chain_corpus(random_rows(&mut rng), 5_000, i), spec).unwrap();
        let d = conditional_relative_entropy(&t, &t, 0.5).unwrap().kl_bits;
        ensure!(d.abs() <= 1e-9, "D(T||T) = {d}");
    }
    let mut min = f64::INFINITY;
    for i in 0..100u64 {
        let a = count(&chain_corpus(random_rows(&mut rng), 2_000, 100 + i), spec).unwrap();
        let b = count(&chain_corpus(random_rows(&mut rng), 2_000, 300 + i), spec).unwrap();
        let d = conditional_relative_entropy(&a, &b, 0.5).unwrap().kl_bits;
        ensure!(d >= 0.0, "pair {i}: D = {d}");
        min = min.min(d);
    }

    // Evaluated corpora drawn from (1 - w) Q + w P, moving toward the
    // reference chain P as w grows.
    let p = MarkovChain::demo().transitions().to_vec();
    let reference = count(&chain_corpus(p.clone(), 200_000, 900), spec).unwrap();
    let weights = [0.0, 0.5, 1.0];
    let mut means = [0.0; 3];
    for seed in 0..10u64 {
        let q = random_rows(&mut ChaCha8Rng::seed_from_u64(1000 + seed));
        let q = MarkovChain::new(q).unwrap().transitions().to_vec();
        for (m, &w) in means.iter_mut().zip(&weights) {
            let rows = p
                .iter()
                .zip(&q)
                .map(|(pr, qr)| pr.iter().zip(qr).map(|(a, b)| w * a + (1.0 - w) * b).collect())
                .collect();
            let eval = count(&chain_corpus(rows, 20_000, 2000 + seed), spec).unwrap();
            *m += conditional_relative_entropy(&reference, &eval, 0.5).unwrap().kl_bits / 10.0;
        }
    }
    ensure!(
        means[0] > means[1] && means[1] > means[2],
        "means not decreasing: {means:?}"
    );
    Ok(format!(
        "self 0, min pair {min:.4}, interpolation means {:.4} > {:.4} > {:.4}",
        means[0], means[1], means[2]
    ))
}

// ------------------------------------------------------------------ 6

/// Counts calls made to the wrapped model.
struct Counting<'a> {
    inner: &'a NGramMaskedModel,
    calls: AtomicUsize,
}

impl MaskedModel for Counting<'_> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn predict(&self, sequence: &[TagId], masked: &[usize]) -> Vec<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(sequence, masked)
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

fn render(batch: &[predictalang::generation::Generation]) -> Vec<u8> {
    let mut out = Vec::new();
    for g in batch {
        for t in &g.tokens {
            out.extend_from_slice(t.to_string().as_bytes());
            out.push(b' ');
        }
        out.push(b'\n');
    }
    out
}

fn batch_corpus(batch: &[predictalang::generation::Generation]) -> TagCorpus {
    TagCorpus::new(
        batch.iter().map(|g| g.tokens.clone()).collect(),
        Arc::new(default_reduction()),
    )
    .unwrap()
}

fn mask_fill_contract() -> Outcome {
    let start = Instant::now();
    let corpus = demo_corpus();
    let model = NGramMaskedModel::noncausal(&corpus, 2).unwrap();
    let cfg = GenerationConfig {
        seq_len: 50,
        group_size: 2,
        iterations: 30,
        ..Default::default()
    };
    ensure!(cfg.expected_calls(GenerationMode::NonCausal) == 750, "expected_calls");
    let counting = Counting {
        inner: &model,
        calls: AtomicUsize::new(0),
    };
    let batch = generate_batch(&counting, &cfg, GenerationMode::NonCausal, 1000).unwrap();
    let calls = counting.calls.load(Ordering::Relaxed);
    ensure!(calls == 750 * 1000, "{calls} model calls for 1000 sequences");
    for g in &batch {
        ensure!(g.model_calls == 750, "sequence reported {} calls", g.model_calls);
        ensure!(g.trace.len() == 30 && g.trace.iter().all(|t| t.model_calls == 25), "trace");
        ensure!(g.tokens.len() == 50, "length");
        ensure!(g.tokens.iter().all(|&t| t != model.mask_id()), "mask sentinel in output");
    }
    let again = generate_batch(&model, &cfg, GenerationMode::NonCausal, 1000).unwrap();
    ensure!(render(&again) == render(&batch), "seeded runs differ");

    let specs = [ContextSpec::causal(2).unwrap(), ContextSpec::middle(2).unwrap()];
    let reference: Vec<CountTable> = specs.iter().map(|&s| count(&corpus, s).unwrap()).collect();
    let mut mean = [[0.0; 2]; 2];
    for seed in 0..20u64 {
        for (row, iterations) in [1usize, 30].into_iter().enumerate() {
            let cfg = GenerationConfig {
                iterations,
                seed,
                ..cfg.clone()
            };
            let b = batch_corpus(&generate_batch(&model, &cfg, GenerationMode::NonCausal, 100).unwrap());
            for (col, r) in reference.iter().enumerate() {
                let t = count(&b, r.spec()).unwrap();
                mean[row][col] += conditional_relative_entropy(r, &t, 0.5).unwrap().kl_bits / 20.0;
            }
        }
    }
    for col in 0..2 {
        ensure!(
            mean[1][col] < mean[0][col],
            "{}: I=30 {:.4} not below I=1 {:.4}",
            specs[col],
            mean[1][col],
            mean[0][col]
        );
    }
    within_time(
        start,
        Duration::from_secs(300),
        format!(
            "750 calls/sequence, no mask in 1000, reproducible; D causal {:.4} -> {:.4}, middle {:.4} -> {:.4} (I=1 -> I=30)",
            mean[0][0], mean[1][0], mean[0][1], mean[1][1]
        ),
    )
}

// ------------------------------------------------------------------ 7

fn margin(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    100.0 * (hi - lo) / lo
}

fn margins_match(reported: f64, recomputed: f64) -> bool {
    (reported - recomputed).abs() <= 1e-4 * recomputed.abs().max(1.0)
}

fn replication_harness() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = tmp.path().join("first.tags");
    let b = tmp.path().join("second.tags");
    fs::write(&a, demo_corpus().to_tagstream()).unwrap();
    // A second "language": the demo chain with its rows mixed toward uniform.
    let rows = MarkovChain::demo()
        .transitions()
        .iter()
        .map(|r| r.iter().map(|p| 0.7 * p + 0.3 / 9.0).collect())
        .collect();
    fs::write(&b, chain_corpus(rows, 60_000, 77).to_tagstream()).unwrap();
    let out = tmp.path().join("cmp");
    let res = Command::new(env!("CARGO_BIN_EXE_predictalang"))
        .args(["compare", "--corpus-a"])
        .arg(&a)
        .arg("--corpus-b")
        .arg(&b)
        .args(["--label-a", "first", "--label-b", "second", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    ensure!(res.status.success(), "compare failed: {}", String::from_utf8_lossy(&res.stderr));

    let summary: ComparisonSummary =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    ensure!(summary.format == SUMMARY_FORMAT, "format");
    let windows: Vec<usize> = summary.rows.iter().map(|r| r.window_len).collect();
    ensure!(windows == [2, 3, 4, 5, 6], "windows {windows:?}");
    let mut csv = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let csv_rows: Vec<csv::StringRecord> = csv.records().map(|r| r.unwrap()).collect();
    ensure!(csv_rows.len() == 5, "summary.csv rows");
    let rendered = String::from_utf8_lossy(&res.stdout).to_string();
    let mut worst: f64 = 0.0;
    for (row, rec) in summary.rows.iter().zip(&csv_rows) {
        for (c, col) in [(&row.causal, 1), (&row.noncausal_minus_causal, 5)] {
            let m = margin(c.entropy_a, c.entropy_b);
            ensure!(margins_match(c.margin_pct, m), "N={}: margin {} vs {m}", row.window_len, c.margin_pct);
            let from_csv: f64 = rec[col + 3].parse().unwrap();
            let m_csv = margin(rec[col].parse().unwrap(), rec[col + 1].parse().unwrap());
            ensure!(margins_match(from_csv, m_csv), "N={}: csv margin", row.window_len);
            let winner = match c.more_predictable {
                Winner::A => "first",
                Winner::B => "second",
                Winner::Tie => "tie",
            };
            ensure!(&rec[col + 2] == winner, "N={}: csv winner", row.window_len);
            ensure!(
                (c.more_predictable == Winner::A) == (c.entropy_a < c.entropy_b),
                "winner is not the lower entropy"
            );
            let cell = format!("{winner} (+{:.2}%)", c.margin_pct);
            ensure!(rendered.contains(&cell), "rendered table lacks {cell}");
            worst = worst.max((c.margin_pct - m).abs());
        }
        // The causal entropies are the k = N rows of the per-window entropy CSVs.
        for (label, h) in [("first", row.causal.entropy_a), ("second", row.causal.entropy_b)] {
            let path = out.join(format!("entropy_{label}_N{}.csv", row.window_len));
            let value = causal_from_csv(&path, row.window_len);
            ensure!(value == Some(h), "{}: causal entropy mismatch", path.display());
        }
    }

    // Margin convention on known entropy pairs and their rounded margins.
    let known = [
        // (causal A, causal B, causal %, nc A, nc B, nc %)
        (2.2193, 2.3331, 5.13, 1.9726, 1.8444, 6.95),
        (2.3335, 2.4981, 7.05, 2.0255, 1.9609, 3.29),
        (2.2903, 2.4258, 5.92, 1.9257, 1.8313, 5.15),
        (2.2559, 2.3686, 4.99, 1.8544, 1.7247, 7.52),
        (2.2329, 2.3412, 4.85, 1.7942, 1.5679, 14.43),
        (2.1846, 2.2817, 4.45, 1.7200, 1.3758, 25.02),
    ];
    let mut rows = Vec::new();
    for (i, &(ca, cb, cp, na, nb, np)) in known.iter().enumerate() {
        let c = compare_entropies(ca, cb);
        let n = compare_entropies(na, nb);
        ensure!(c.more_predictable == Winner::A && n.more_predictable == Winner::B, "known winners");
        ensure!((c.margin_pct - cp).abs() < 0.006, "causal {cp} vs {:.4}", c.margin_pct);
        ensure!((n.margin_pct - np).abs() < 0.006, "non-causal {np} vs {:.4}", n.margin_pct);
        rows.push(SummaryRow {
            window_len: i + 2,
            causal: c,
            noncausal_minus_causal: n,
            middle_a: 0.0,
            middle_b: 0.0,
        });
    }
    let table = ComparisonSummary {
        format: SUMMARY_FORMAT.into(),
        label_a: "English".into(),
        label_b: "Spanish".into(),
        rows,
    }
    .render();
    ensure!(table.contains("English (+5.13%)") && table.contains("Spanish (+25.02%)"), "render");

    Ok(format!(
        "N=2..6 rows consistent across json/csv/table, max margin error {worst:.2e}; known margins reproduced"
    ))
}

fn causal_from_csv(path: &Path, n: usize) -> Option<f64> {
    let mut r = csv::Reader::from_path(path).ok()?;
    for rec in r.records() {
        let rec = rec.ok()?;
        if &rec[0] == "position" && rec[2] == n.to_string() {
            return rec[3].parse().ok();
        }
    }
    None
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("brute-force oracle equivalence", brute_force_equivalence),
        ("analytic entropy", analytic_entropy),
        ("variance formulas", variance_formulas),
        ("shard invariance", shard_invariance),
        ("divergence properties", divergence_properties),
        ("mask-and-fill contract", mask_fill_contract),
        ("end-to-end replication harness", replication_harness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
