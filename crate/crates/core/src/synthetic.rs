//! Synthetic Lipschitz-logit testbed: a Markov chain with repeated transition
//! rows, its log-matrix factorization into context and output embeddings, and
//! the perplexity-versus-training-size sweep.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum;
use crate::corpus::CountTable;
use crate::embeddings::{ContextEmbeddings, Norm, ProximityConfig, SupportEstimator, SynonymIndex};
use crate::error::{Error, Result};
use crate::estimators::{BigramModel, SmootherConfig};
use crate::prob::{self, entropy, kl_divergence, log_perplexity, ProbDist, TableModel, TestSequence};
use crate::semantic::{build_synonym_sets, ProxyAlphabet, SemanticConfig, SemanticModel, WeightRule};

/// Smallest transition probability after flooring the Dirichlet draws.
pub const MASS_FLOOR: f64 = 1e-6;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub states: usize,
    /// Number of distinct transition rows.
    pub classes: usize,
    /// Embedding dimension; `None` uses the numerical rank.
    pub dim: Option<usize>,
    pub seed: u64,
}

impl Default for MarkovSpec {
    fn default() -> Self {
        Self {
            states: 100,
            classes: 10,
            dim: None,
            seed: 0,
        }
    }
}

impl MarkovSpec {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.classes == 0 || self.states % self.classes != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} states cannot be split into {} equal classes",
                self.states, self.classes
            )));
        }
        Ok(())
    }

    /// Class (distinct row) of a state.
    pub fn class_of(&self, state: usize) -> usize {
        state / (self.states / self.classes)
    }
}

/// A strictly positive transition matrix with stationary law and an exact
/// factorization `ln(P[c][w] / pi[c]) = <e_c, f_w>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedChain {
    n: usize,
    transition: Vec<f64>,
    stationary: Vec<f64>,
    context_embeddings: Vec<Vec<f64>>,
    output_embeddings: Vec<Vec<f64>>,
    rank: usize,
    cumulative: Vec<f64>,
}

/// Samples the distinct rows and builds the factorized chain.
pub fn generate_chain(spec: &MarkovSpec) -> Result<FactorizedChain> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let rows: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let draw: Vec<f64> = (0..spec.states).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = draw.iter().sum();
            let floored: Vec<f64> = draw.iter().map(|x| (x / total).max(MASS_FLOOR)).collect();
            let total = accum::sum(floored.iter().copied());
            floored.iter().map(|x| x / total).collect()
        })
        .collect();
    let matrix: Vec<Vec<f64>> = (0..spec.states)
        .map(|s| rows[spec.class_of(s)].clone())
        .collect();
    FactorizedChain::from_transition(matrix, spec.dim)
}

fn stationary_distribution(n: usize, transition: &[f64]) -> Result<Vec<f64>> {
    // (P^T - I) x = 0 with the last equation replaced by sum(x) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = transition[j * n + i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidParameter("chain has no unique stationary law".into()))?;
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total = accum::sum(pi.iter().copied());
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

impl FactorizedChain {
    /// Factorizes a row-stochastic, strictly positive matrix.
    pub fn from_transition(rows: Vec<Vec<f64>>, dim: Option<usize>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty transition matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter(format!("row {i} has wrong length")));
            }
            if row.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} is not strictly positive"
                )));
            }
            let total = accum::sum(row.iter().copied());
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("row {i} sums to {total}")));
            }
        }
        let transition: Vec<f64> = rows.into_iter().flatten().collect();
        let stationary = stationary_distribution(n, &transition)?;

        let q = DMatrix::<f64>::from_fn(n, n, |c, w| {
            (transition[c * n + w] / stationary[c]).ln()
        });
        let svd = q.svd(true, true);
        let u = svd.u.as_ref().expect("left singular vectors");
        let vt = svd.v_t.as_ref().expect("right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sigma_max = svd.singular_values[order[0]];
        let numerical_rank = order
            .iter()
            .take_while(|&&k| svd.singular_values[k] > RANK_TOLERANCE * sigma_max && sigma_max > 0.0)
            .count();
        let rank = match dim {
            Some(t) if t < numerical_rank => {
                return Err(Error::RankOverflow {
                    needed: numerical_rank,
                    requested: t,
                })
            }
            Some(t) => t,
            None => numerical_rank.max(1),
        };
        let mut context_embeddings = vec![vec![0.0; rank]; n];
        let mut output_embeddings = vec![vec![0.0; rank]; n];
        for (k, &idx) in order.iter().take(numerical_rank).enumerate() {
            let s = svd.singular_values[idx].sqrt();
            for i in 0..n {
                context_embeddings[i][k] = u[(i, idx)] * s;
                output_embeddings[i][k] = vt[(idx, i)] * s;
            }
        }
        let mut cumulative = Vec::with_capacity(n * n);
        for c in 0..n {
            let mut acc = 0.0;
            for w in 0..n {
                acc += transition[c * n + w];
                cumulative.push(acc);
            }
        }
        Ok(Self {
            n,
            transition,
            stationary,
            context_embeddings,
            output_embeddings,
            rank,
            cumulative,
        })
    }

    pub fn states(&self) -> usize {
        self.n
    }

    /// Embedding dimension actually used.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.transition[c * self.n..(c + 1) * self.n]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn context_embedding(&self, c: usize) -> &[f64] {
        &self.context_embeddings[c]
    }

    pub fn output_embedding(&self, w: usize) -> &[f64] {
        &self.output_embeddings[w]
    }

    /// Context embeddings indexed by state.
    pub fn context_embeddings(&self) -> ContextEmbeddings {
        ContextEmbeddings::from_rows(self.rank, self.context_embeddings.iter().cloned().map(Some))
    }

    /// `max_w ||f_w||_2`, the Lipschitz constant of the logits `<e_c, f_w>`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.output_embeddings
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `max_c |pi P - pi|_c`.
    pub fn stationarity_error(&self) -> f64 {
        (0..self.n)
            .map(|w| {
                let flow = accum::sum((0..self.n).map(|c| self.stationary[c] * self.transition[c * self.n + w]));
                (flow - self.stationary[w]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Softmax over `w` of `<e_c, f_w>` for context `c`.
    pub fn reconstructed_row(&self, c: usize) -> Vec<f64> {
        let e = &self.context_embeddings[c];
        let logits: Vec<f64> = self
            .output_embeddings
            .iter()
            .map(|f| e.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect();
        let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - hi).exp()).collect();
        let total = accum::sum(exps.iter().copied());
        exps.iter().map(|x| x / total).collect()
    }

    /// Largest absolute difference between `P` and its softmax reconstruction.
    pub fn reconstruction_error(&self) -> f64 {
        (0..self.n)
            .flat_map(|c| {
                let r = self.reconstructed_row(c);
                self.row(c)
                    .iter()
                    .zip(r)
                    .map(|(p, q)| (p - q).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// The true conditional model.
    pub fn model(&self) -> TableModel {
        let rows = (0..self.n)
            .map(|c| Some(ProbDist::new(self.row(c).to_vec()).expect("rows are distributions")))
            .collect();
        TableModel::new(self.n, rows).expect("square matrix")
    }

    /// `sum_c pi(c) H(P(.|c))` in nats.
    pub fn conditional_entropy(&self) -> f64 {
        accum::sum((0..self.n).map(|c| {
            self.stationary[c] * entropy(&ProbDist::new(self.row(c).to_vec()).expect("row"))
        }))
    }

    fn next_state<R: Rng>(&self, c: usize, rng: &mut R) -> usize {
        let row = &self.cumulative[c * self.n..(c + 1) * self.n];
        let u: f64 = rng.random::<f64>() * row[self.n - 1];
        row.partition_point(|&x| x <= u).min(self.n - 1)
    }

    fn initial_state<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, p) in self.stationary.iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.n - 1
    }
}

/// A path of length `n` started from the stationary distribution.
pub fn sample_sequence(chain: &FactorizedChain, n: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut s = chain.initial_state(&mut rng);
    out.push(s as u32);
    for _ in 1..n {
        s = chain.next_state(s, &mut rng);
        out.push(s as u32);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub lipschitz: f64,
    /// `max over ordered pairs of d(P_c || P_c~) - 2 L ||e_c - e_c~||_2`.
    pub max_slack: f64,
    pub worst_pair: (usize, usize),
    pub pairs_checked: usize,
    pub violations: usize,
}

/// Checks `d(P(.|c) || P(.|c~)) <= 2 L ||e_c - e_c~||_2` over every ordered pair.
pub fn check_lipschitz_logit(chain: &FactorizedChain) -> LipschitzReport {
    let l = chain.lipschitz_constant();
    let n = chain.states();
    let rows: Vec<ProbDist> = (0..n)
        .map(|c| ProbDist::new(chain.row(c).to_vec()).expect("row"))
        .collect();
    let slacks: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|c| {
            let rows = &rows;
            (0..n).map(move |c2| {
                let kl = kl_divergence(&rows[c], &rows[c2]);
                let dist = Norm::L2.distance(chain.context_embedding(c), chain.context_embedding(c2));
                (kl - 2.0 * l * dist, c, c2)
            })
        })
        .collect();
    let violations = slacks.iter().filter(|s| s.0 > 0.0).count();
    let worst = slacks
        .iter()
        .copied()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty chain");
    LipschitzReport {
        lipschitz: l,
        max_slack: worst.0,
        worst_pair: (worst.1, worst.2),
        pairs_checked: slacks.len(),
        violations,
    }
}

/// Parameters of the perplexity-versus-training-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub spec: MarkovSpec,
    pub n_train_grid: Vec<usize>,
    pub n_test: usize,
    pub reps: usize,
    /// Synonym counts; `0` is the plain add-beta model.
    pub m_grid: Vec<usize>,
    /// Add-constant of the base model.
    pub beta: f64,
    pub rule: WeightRule,
    pub proxy_alphabet: ProxyAlphabet,
    pub support: SupportEstimator,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            spec: MarkovSpec::default(),
            n_train_grid: vec![1_000, 3_000, 10_000, 30_000, 100_000],
            n_test: 100_000,
            reps: 10,
            m_grid: vec![0, 5, 10],
            beta: 1.0,
            rule: WeightRule::softmin(1.0),
            proxy_alphabet: ProxyAlphabet::Full,
            support: SupportEstimator::Chao1,
            seed: 0,
        }
    }
}

/// One CSV row: `n_train,method,m,mean_ppl,stderr_ppl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_train: usize,
    pub method: String,
    pub m: usize,
    pub mean_ppl: f64,
    pub stderr_ppl: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "n_train,method,m,mean_ppl,stderr_ppl";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6}",
            self.n_train, self.method, self.m, self.mean_ppl, self.stderr_ppl
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `exp(sum_c pi(c) H(P(.|c)))`.
    pub entropy_bound_ppl: f64,
    pub rank: usize,
    pub lipschitz: f64,
}

impl SweepResult {
    pub fn find(&self, n_train: usize, method: &str, m: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n_train == n_train && r.method == method && r.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SweepRow::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }
}

/// Deterministic sub-seed for stream `index` of a master seed (SplitMix64).
pub fn sub_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = accum::sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = accum::sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Test perplexities of one repetition: `[true, m_grid...]`.
fn one_repetition(
    chain: &FactorizedChain,
    embeddings: &ContextEmbeddings,
    cfg: &SweepConfig,
    n_train: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = chain.states();
    let train = sample_sequence(chain, n_train, sub_seed(seed, 0));
    let test_tokens = sample_sequence(chain, cfg.n_test, sub_seed(seed, 1));
    let test = TestSequence::from_tokens(&test_tokens, None)?;
    let counts = CountTable::from_token_stream(&train, n);
    let base = BigramModel::new(counts.clone(), SmootherConfig::AddBeta { beta: cfg.beta })?;
    let prox = ProximityConfig {
        lipschitz: 2.0 * chain.lipschitz_constant(),
        norm: Norm::L2,
        epsilon: 0.0,
    };
    let index = SynonymIndex::new(embeddings, &counts, cfg.support, prox, cfg.beta)?;
    let contexts: Vec<u32> = (0..n as u32).collect();

    let mut out = vec![log_perplexity(&chain.model(), &test)?.exp()];
    for &m in &cfg.m_grid {
        let sem = SemanticConfig {
            m,
            rule: cfg.rule,
            beta: cfg.beta,
            proxy_alphabet: cfg.proxy_alphabet,
        };
        let sets = build_synonym_sets(&index, &contexts, &sem)?;
        let model = SemanticModel::new(&base, &sets);
        let dense = TableModel::materialize(&model, n);
        out.push(prob::log_perplexity(&dense, &test)?.exp());
    }
    Ok(out)
}

/// Runs every (n_train, repetition) cell in parallel. Seeds depend only on
/// the master seed and the cell, so results do not depend on thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.reps == 0 || cfg.n_test < 2 || cfg.n_train_grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParameter(
            "sweep needs reps >= 1 and sequences of length >= 2".into(),
        ));
    }
    let chain = generate_chain(&cfg.spec)?;
    let embeddings = chain.context_embeddings();
    let cells: Vec<(usize, usize)> = (0..cfg.n_train_grid.len())
        .flat_map(|i| (0..cfg.reps).map(move |r| (i, r)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(i, r)| {
            let seed = sub_seed(cfg.seed, (i * 1_000_003 + r) as u64);
            one_repetition(&chain, &embeddings, cfg, cfg.n_train_grid[i], seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (i, &n_train) in cfg.n_train_grid.iter().enumerate() {
        let reps: Vec<&Vec<f64>> = results[i * cfg.reps..(i + 1) * cfg.reps].iter().collect();
        let column = |k: usize| -> Vec<f64> { reps.iter().map(|r| r[k]).collect() };
        let (mean, se) = mean_and_stderr(&column(0));
        rows.push(SweepRow {
            n_train,
            method: "true".into(),
            m: 0,
            mean_ppl: mean,
            stderr_ppl: se,
        });
        for (j, &m) in cfg.m_grid.iter().enumerate() {
            let (mean, se) = mean_and_stderr(&column(j + 1));
            rows.push(SweepRow {
                n_train,
                method: if m == 0 { "add_beta".into() } else { "semantic".into() },
                m,
                mean_ppl: mean,
                stderr_ppl: se,
            });
        }
    }
    Ok(SweepResult {
        rows,
        entropy_bound_ppl: chain.conditional_entropy().exp(),
        rank: chain.rank(),
        lipschitz: chain.lipschitz_constant(),
    })
}
