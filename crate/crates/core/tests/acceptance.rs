//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The natural-language check reads `SEMSMOOTH_TRAIN`, `SEMSMOOTH_TEST` and
//! `SEMSMOOTH_EMB` (plus optional `SEMSMOOTH_EMB_FORMAT=word2vec`) when set;
//! otherwise it runs on a generated surrogate corpus and says so.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use semsmooth::corpus::{preprocess, CountTable, Vocabulary};
use semsmooth::embeddings::{
    proximity, EmbeddingFormat, EmbeddingTable, ProximityConfig, SupportEstimator, SynonymIndex,
};
use semsmooth::estimators::{add_beta, kneser_ney, variable_add_constant, BetaTable, BigramModel, SmootherConfig};
use semsmooth::prob::{decompose, ConditionalModel, ProbDist, TableModel, TestSequence};
use semsmooth::risk::{
    check_assouad, exact_risk, mc_risk, add_half_suite, known_side_suite, estimated_side_suite, zipf, RiskRow, SuiteConfig,
};
use semsmooth::semantic::{build_synonym_sets, compute_weights, SemanticConfig, SemanticModel, WeightRule};
use semsmooth::synthetic::{check_lipschitz_logit, generate_chain, run_sweep, MarkovSpec, SweepConfig};

type Outcome = Result<(bool, String), String>;

/// Like [`Outcome`], with `None` meaning the criterion could not be evaluated.
type Optional = Result<(Option<bool>, String), String>;

#[derive(Default)]
struct Runner {
    failures: usize,
    skipped: usize,
}

impl Runner {
    fn check(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        self.check_optional(id, name, limit, || f().map(|(ok, d)| (Some(ok), d)));
    }

    fn check_optional(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Optional) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let (status, detail) = match result {
            Ok((Some(ok), detail)) => (if ok && in_time { "PASS" } else { "FAIL" }, detail),
            Ok((None, detail)) => ("SKIP", detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        match status {
            "FAIL" => self.failures += 1,
            "SKIP" => self.skipped += 1,
            _ => {}
        }
        println!(
            "criterion {id:>2} {status:<4} {name}: {detail} [{:.1}s, limit {}s{}]",
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_positive_row<R: Rng>(d: usize, rng: &mut R) -> ProbDist {
    let g = Gamma::new(0.5, 1.0).unwrap();
    let w: Vec<f64> = (0..d).map(|_| g.sample(rng) + 1e-6).collect();
    ProbDist::from_weights(&w).unwrap()
}

fn decomposition_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut longest = 0;
    for _ in 0..1000 {
        let d = rng.random_range(2..=60);
        let rows = (0..d).map(|_| Some(random_positive_row(d, &mut rng))).collect();
        let model = TableModel::new(d, rows).map_err(err)?;
        // Log-uniform lengths between 2 and 1e5 tokens.
        let len = (10f64.powf(rng.random_range(0.3..5.0)) as usize).clamp(2, 100_000);
        longest = longest.max(len);
        let skew = random_positive_row(d, &mut rng);
        let cum: Vec<f64> = skew
            .masses()
            .iter()
            .scan(0.0, |a, p| {
                *a += p;
                Some(*a)
            })
            .collect();
        let tokens: Vec<u32> = (0..len)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * cum[d - 1];
                cum.partition_point(|&x| x <= u).min(d - 1) as u32
            })
            .collect();
        let seq = TestSequence::from_tokens(&tokens, None).map_err(err)?;
        let r = decompose(&model, &seq).map_err(err)?;
        worst = worst.max((r.log_ppl - (r.entropy_term + r.kl_term)).abs());
    }
    Ok((
        worst <= 1e-10,
        format!("max |log_ppl - (H + KL)| = {worst:.3e} over 1000 pairs (longest {longest} tokens)"),
    ))
}

fn lipschitz_geometry() -> Outcome {
    let chain = generate_chain(&MarkovSpec::default()).map_err(err)?;
    let r = check_lipschitz_logit(&chain);
    Ok((
        r.violations == 0 && r.pairs_checked == 100 * 100,
        format!(
            "{} ordered pairs, {} violations, L = {:.4}, max slack {:.4e}",
            r.pairs_checked, r.violations, r.lipschitz, r.max_slack
        ),
    ))
}

fn summarize(rows: &[RiskRow], checked: impl Fn(&RiskRow) -> bool) -> (bool, String) {
    let checked: Vec<&RiskRow> = rows.iter().filter(|r| checked(r)).collect();
    let violated = checked.iter().filter(|r| r.violated).count();
    let tightest = checked
        .iter()
        .map(|r| (r.mean_risk - 3.0 * r.stderr) / r.bound)
        .filter(|x| x.is_finite())
        .fold(0.0f64, f64::max);
    (
        violated == 0 && !checked.is_empty(),
        format!(
            "{} checked cells, {violated} violations, largest (risk - 3SE)/bound = {tightest:.3}",
            checked.len()
        ),
    )
}

fn suite_cfg() -> SuiteConfig {
    SuiteConfig {
        trials: 2_000,
        ..SuiteConfig::default()
    }
}

fn add_half_slack() -> Outcome {
    let rows = add_half_suite(&suite_cfg()).map_err(err)?;
    Ok(summarize(&rows, |_| true))
}

fn known_side() -> Outcome {
    let rows = known_side_suite(&suite_cfg()).map_err(err)?;
    Ok(summarize(&rows, |r| r.estimator.starts_with("best_alpha")))
}

fn estimated_side() -> Outcome {
    let rows = estimated_side_suite(&suite_cfg()).map_err(err)?;
    Ok(summarize(&rows, |r| r.estimator.starts_with("plugin")))
}

fn assouad() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [4, 8, 16] {
        let c = check_assouad(d, 1_000, 7 + d as u64).map_err(err)?;
        ok &= c.violations == 0;
        parts.push(format!(
            "d={d}: {} violations (ball {:.4} <= {:.4}, neighbour {:.4} <= {:.4})",
            c.violations,
            c.max_ball_kl,
            (d * d) as f64 * c.tau * c.tau,
            c.max_neighbor_kl,
            8.0 * c.tau * c.tau * d as f64
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn sweep_shape() -> Outcome {
    let cfg = SweepConfig {
        n_train_grid: vec![1_000, 3_000, 10_000, 100_000],
        n_test: 100_000,
        reps: 10,
        m_grid: vec![0, 5],
        ..SweepConfig::default()
    };
    let res = run_sweep(&cfg).map_err(err)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [1_000, 3_000, 10_000] {
        let base = res.find(n, "add_beta", 0).ok_or("missing row")?;
        let sem = res.find(n, "semantic", 5).ok_or("missing row")?;
        let pooled = (base.stderr_ppl.powi(2) + sem.stderr_ppl.powi(2)).sqrt();
        let gap = base.mean_ppl - sem.mean_ppl;
        ok &= gap > 2.0 * pooled;
        parts.push(format!(
            "n={n}: {:.2} vs {:.2} ({:.1} SE)",
            sem.mean_ppl,
            base.mean_ppl,
            gap / pooled
        ));
    }
    let bound = res.entropy_bound_ppl;
    for (method, m) in [("add_beta", 0), ("semantic", 5)] {
        let r = res.find(100_000, method, m).ok_or("missing row")?;
        let rel = r.mean_ppl / bound - 1.0;
        ok &= rel.abs() <= 0.10;
        parts.push(format!("n=1e5 {method}: {:.2} ({:+.1}% of {bound:.2})", r.mean_ppl, 100.0 * rel));
    }
    Ok((ok, parts.join("; ")))
}

fn oracle_agreement() -> Outcome {
    let kt = BetaTable::krichevsky_trofimov();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for d in [2usize, 3, 4, 5, 8, 16, 64] {
        let mut max_n = 1u64;
        while (d as u64).pow(max_n as u32 + 1) <= semsmooth::risk::MAX_OUTCOMES {
            max_n += 1;
        }
        for n in [1, max_n] {
            for (shape, pi) in [("uniform", ProbDist::uniform(d)), ("zipf", zipf(d, 1.0))] {
                for est in ["add_half", "add_one"] {
                    let f = |c: &[u64]| match est {
                        "add_half" => variable_add_constant(c, &kt),
                        _ => add_beta(c, 1.0),
                    };
                    let exact = exact_risk(f, &pi, n).map_err(err)?;
                    let seed = checked as u64 + 1_000;
                    let mc = mc_risk(|c, _| f(c), &pi, n, 4_000, seed).map_err(err)?;
                    // A zero-variance estimate is exact up to rounding.
                    let diff = (mc.mean - exact).abs();
                    let z = if mc.stderr > 0.0 { diff / mc.stderr } else { 0.0 };
                    worst = worst.max(z);
                    checked += 1;
                    if !(diff <= 3.0 * mc.stderr + 1e-12) {
                        failures.push(format!("d={d} n={n} {shape} {est}: z={z:.2}"));
                    }
                }
            }
        }
    }
    Ok((
        failures.is_empty(),
        format!(
            "{checked} configurations, largest |MC - exact|/SE = {worst:.2}{}",
            if failures.is_empty() { String::new() } else { format!("; outside 3 SE: {}", failures.join(", ")) }
        ),
    ))
}

/// Writes a surrogate corpus drawn from a bigram process whose logits are
/// `<e_c, f_w> + b_w`: 100 classes of 10 words with nearby context vectors,
/// a Zipf-like word bias, and the context vectors as the embedding file.
fn write_surrogate_corpus(dir: &Path) -> Result<(PathBuf, PathBuf, PathBuf), String> {
    const WORDS: usize = 1_000;
    const CLASS: usize = 10;
    const DIM: usize = 16;
    const LEN: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut normal = |scale: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    };
    let centroids: Vec<Vec<f64>> = (0..WORDS / CLASS).map(|_| (0..DIM).map(|_| normal(1.0)).collect()).collect();
    let ctx: Vec<Vec<f64>> = (0..WORDS)
        .map(|w| centroids[w / CLASS].iter().map(|x| x + normal(0.05)).collect())
        .collect();
    let out: Vec<Vec<f64>> = (0..WORDS).map(|_| (0..DIM).map(|_| normal(0.5)).collect()).collect();
    let bias: Vec<f64> = (0..WORDS).map(|w| -((w % 97 + 1) as f64).ln()).collect();
    let cum: Vec<Vec<f64>> = ctx
        .iter()
        .map(|e| {
            let logits: Vec<f64> = out
                .iter()
                .zip(&bias)
                .map(|(f, b)| e.iter().zip(f).map(|(x, y)| x * y).sum::<f64>() + b)
                .collect();
            let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut acc = 0.0;
            logits
                .iter()
                .map(|l| {
                    acc += (l - hi).exp();
                    acc
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sentence = |rng: &mut ChaCha8Rng| -> String {
        let mut w = rng.random_range(0..WORDS);
        let mut words = vec![format!("w{w}")];
        for _ in 1..LEN {
            let row = &cum[w];
            let u = rng.random::<f64>() * row[WORDS - 1];
            w = row.partition_point(|&x| x <= u).min(WORDS - 1);
            words.push(format!("w{w}"));
        }
        words.join(" ") + ".\n"
    };
    let train: String = (0..5_000).map(|_| sentence(&mut rng)).collect();
    let test: String = (0..500).map(|_| sentence(&mut rng)).collect();
    let table = EmbeddingTable::from_vectors((0..WORDS).map(|w| (format!("w{w}"), ctx[w].clone()))).map_err(err)?;
    let paths = (dir.join("train.txt"), dir.join("test.txt"), dir.join("emb.txt"));
    std::fs::write(&paths.0, train).map_err(err)?;
    std::fs::write(&paths.1, test).map_err(err)?;
    let mut buf = Vec::new();
    table.write_glove(&mut buf).map_err(err)?;
    std::fs::write(&paths.2, buf).map_err(err)?;
    Ok(paths)
}

fn perplexity_sweep(
    train: &Path,
    test: &Path,
    emb: &Path,
    format: EmbeddingFormat,
    smoother: SmootherConfig,
    ms: &[usize],
) -> Result<Vec<SweepPoint>, String> {
    let read = |p: &Path| std::fs::read(p).map(|b| preprocess(&String::from_utf8_lossy(&b))).map_err(err);
    let (train, test) = (read(train)?, read(test)?);
    let mut vocab = Vocabulary::new();
    let train_ids = vocab.intern_sentences(&train);
    let test_ids = vocab.intern_sentences(&test);
    let counts = CountTable::from_sentences(&train_ids, vocab.len());
    let base = BigramModel::new(counts, smoother).map_err(err)?;
    let seq = TestSequence::from_sentences(&test_ids).map_err(err)?;
    let embeddings = EmbeddingTable::load(emb, format).map_err(err)?.align(&vocab);
    let index = SynonymIndex::new(
        &embeddings,
        base.counts(),
        SupportEstimator::Chao1,
        ProximityConfig::default(),
        0.005,
    )
    .map_err(err)?;
    let contexts: Vec<u32> = seq.events().iter().map(|e| e.0).collect::<BTreeSet<_>>().into_iter().collect();
    ms.iter()
        .map(|&m| {
            let cfg = SemanticConfig { m, ..SemanticConfig::default() };
            let sets = build_synonym_sets(&index, &contexts, &cfg).map_err(err)?;
            let model = SemanticModel::new(&base, &sets);
            let sentence_nll = test_ids
                .iter()
                .map(|s| {
                    s.windows(2)
                        .map(|w| model.prob(w[0], w[1]).map(|p| -p.ln()))
                        .sum::<semsmooth::Result<f64>>()
                })
                .collect::<semsmooth::Result<Vec<f64>>>()
                .map_err(err)?;
            Ok(SweepPoint {
                ppl: decompose(&model, &seq).map_err(err)?.perplexity(),
                sentence_nll,
                tokens: seq.len(),
            })
        })
        .collect()
}

struct SweepPoint {
    ppl: f64,
    sentence_nll: Vec<f64>,
    tokens: usize,
}

/// Change in log-perplexity from `a` to `b` and its standard error, paired
/// over test sentences.
fn paired_change(a: &SweepPoint, b: &SweepPoint) -> (f64, f64) {
    let diffs: Vec<f64> = a.sentence_nll.iter().zip(&b.sentence_nll).map(|(x, y)| y - x).collect();
    let s = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / s;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (s - 1.0);
    let t = a.tokens as f64;
    (mean * s / t, (s * var).sqrt() / t)
}

/// A log-perplexity rise counts as noise if it is within this many paired
/// standard errors.
const NOISE_SE: f64 = 2.0;

/// Runs on the user corpus when one is configured. Without one the criterion
/// cannot be evaluated; the surrogate run is reported as a diagnostic only.
fn natural_language() -> Optional {
    let tmp = tempfile::tempdir().map_err(err)?;
    let (train, test, emb, format, user) = match (
        std::env::var_os("SEMSMOOTH_TRAIN"),
        std::env::var_os("SEMSMOOTH_TEST"),
        std::env::var_os("SEMSMOOTH_EMB"),
    ) {
        (Some(a), Some(b), Some(c)) => {
            let format = match std::env::var("SEMSMOOTH_EMB_FORMAT").as_deref() {
                Ok("word2vec") => EmbeddingFormat::Word2VecText,
                _ => EmbeddingFormat::GloveText,
            };
            (a.into(), b.into(), c.into(), format, true)
        }
        _ => {
            let (a, b, c) = write_surrogate_corpus(tmp.path())?;
            (a, b, c, EmbeddingFormat::GloveText, false)
        }
    };
    let ms = [0, 10, 25, 50];
    let add = perplexity_sweep(&train, &test, &emb, format, SmootherConfig::AddBeta { beta: 0.003 }, &ms)?;
    let kn = perplexity_sweep(&train, &test, &emb, format, SmootherConfig::KneserNey { discount: 0.6 }, &ms)?;
    let add_ok = add[3].ppl < add[0].ppl;
    let steps: Vec<(f64, f64)> = kn.windows(2).map(|w| paired_change(&w[0], &w[1])).collect();
    let kn_ok = steps.iter().all(|(change, se)| *change <= NOISE_SE * se);
    let worst_step = steps.iter().map(|(c, se)| c / se).fold(f64::NEG_INFINITY, f64::max);
    let fmt = |v: &[SweepPoint]| v.iter().map(|x| format!("{:.1}", x.ppl)).collect::<Vec<_>>().join(" -> ");
    let verdict = add_ok && kn_ok;
    let source = if user {
        "user corpus".to_owned()
    } else {
        format!(
            "no user corpus supplied; surrogate diagnostic (add-beta drop: {add_ok}, KN non-increasing: {kn_ok})"
        )
    };
    Ok((
        user.then_some(verdict),
        format!(
            "{source}; m = 0,10,25,50; add-0.003: {}; KN-0.6: {} (largest step {worst_step:+.2} paired SE)",
            fmt(&add),
            fmt(&kn)
        ),
    ))
}

fn fixtures() -> Outcome {
    let mut worst = 0.0f64;
    let mut note = |got: f64, want: f64| worst = worst.max((got - want).abs());

    let table = CountTable::from_bigram_counts(3, [((0, 1), 2), ((0, 2), 1), ((1, 0), 1)]);
    let kn = kneser_ney(&table, 0, 0.5).map_err(err)?;
    // lambda = 0.5 * 2 / 3 and every word has one distinct predecessor.
    note(kn.get(1), 1.5 / 3.0 + (1.0 / 3.0) * (1.0 / 3.0));
    note(kn.get(2), 0.5 / 3.0 + (1.0 / 3.0) * (1.0 / 3.0));
    note(kn.get(0), (1.0 / 3.0) * (1.0 / 3.0));
    let rounded = [(kn.get(1), 0.6111), (kn.get(2), 0.2778), (kn.get(0), 0.1111)];
    let rounding_ok = rounded.iter().all(|(a, b)| (a - b).abs() < 5e-5);

    let ab = add_beta(&[2, 0, 1], 1.0).map_err(err)?;
    for (i, want) in [0.5, 1.0 / 6.0, 1.0 / 3.0].into_iter().enumerate() {
        note(ab.get(i), want);
    }

    let w = compute_weights(0.1, &[0.3, 0.6], &WeightRule::reciprocal());
    for (got, want) in w.iter().zip([2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0]) {
        note(*got, want);
    }

    note(proximity(&[1.0, 2.0], &[1.5, 1.0], &ProximityConfig::default()), 7.5);

    Ok((
        worst <= 1e-9 && rounding_ok,
        format!("max deviation from exact values {worst:.2e}; 4-digit values match: {rounding_ok}"),
    ))
}

fn main() {
    let mut r = Runner::default();
    let min = |m: u64| Duration::from_secs(60 * m);
    r.check(1, "decomposition identity", min(1), decomposition_identity);
    r.check(2, "lipschitz-logit geometry", min(1), lipschitz_geometry);
    r.check(3, "add-half risk slack", min(5), add_half_slack);
    r.check(4, "known side information", min(5), known_side);
    r.check(5, "estimated side information", min(5), estimated_side);
    r.check(6, "hypercube family", min(1), assouad);
    r.check(7, "synthetic sweep shape", min(15), sweep_shape);
    r.check(8, "exhaustive oracle agreement", min(2), oracle_agreement);
    r.check_optional(9, "natural-language direction", min(30), natural_language);
    r.check(10, "hand-computed fixtures", min(1), fixtures);
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        10 - r.failures - r.skipped,
        r.failures,
        r.skipped
    );
    if r.failures > 0 {
        std::process::exit(1);
    }
}
