//! Probability primitives: distributions over a finite alphabet, KL divergence,
//! entropy, perplexity, and the exact split of log-perplexity into an
//! empirical conditional entropy term and a conditional KL term.
//!
//! All logarithms are natural (nats). Perplexity is `exp(log_ppl)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::{self, NeumaierSum};
use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`ProbDist`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability distribution over the alphabet `0..d`.
///
/// The support is the full index range; symbols with zero mass are kept so
/// that distributions over the same alphabet can be compared pointwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    mass: Vec<f64>,
}

impl ProbDist {
    /// Validates and wraps a mass vector.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        if let Some((i, m)) = mass
            .iter()
            .enumerate()
            .find(|(_, m)| !m.is_finite() || **m < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "mass[{i}] = {m} is not a nonnegative finite number"
            )));
        }
        let total = accum::sum(mass.iter().copied());
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total}"
            )));
        }
        Ok(Self { mass })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be nonnegative and finite".into(),
            ));
        }
        let total = accum::sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(d: usize) -> Self {
        assert!(d > 0, "uniform distribution needs a nonempty alphabet");
        Self {
            mass: vec![1.0 / d as f64; d],
        }
    }

    pub fn point_mass(d: usize, symbol: usize) -> Self {
        assert!(symbol < d);
        let mut mass = vec![0.0; d];
        mass[symbol] = 1.0;
        Self { mass }
    }

    /// Alphabet size.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, symbol: usize) -> f64 {
        self.mass[symbol]
    }

    /// Symbols carrying positive mass, in increasing order.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, _)| i)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.mass
    }
}

/// KL divergence `d(p || q)` in nats.
///
/// Returns `f64::INFINITY` when `p` puts mass where `q` has none.
///
/// # Panics
///
/// If the alphabets differ in size.
pub fn kl_divergence(p: &ProbDist, q: &ProbDist) -> f64 {
    assert_eq!(p.len(), q.len(), "kl_divergence: alphabet mismatch");
    kl_divergence_slices(p.masses(), q.masses())
}

pub(crate) fn kl_divergence_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc.add(pi * (pi / qi).ln());
    }
    // Rounding can leave a tiny negative value when p == q.
    acc.value().max(0.0)
}

/// Shannon entropy in nats.
pub fn entropy(p: &ProbDist) -> f64 {
    let h = accum::sum(
        p.masses()
            .iter()
            .filter(|m| **m > 0.0)
            .map(|&m| -m * m.ln()),
    );
    h.max(0.0)
}

/// `sum_i |p_i - q_i|`.
pub fn l1_distance(p: &ProbDist, q: &ProbDist) -> f64 {
    assert_eq!(p.len(), q.len(), "l1_distance: alphabet mismatch");
    accum::sum(
        p.masses()
            .iter()
            .zip(q.masses())
            .map(|(a, b)| (a - b).abs()),
    )
}

/// A conditional next-symbol model `p(word | context)` over `0..alphabet_size()`.
pub trait ConditionalModel: Sync {
    fn alphabet_size(&self) -> usize;

    /// Probability of `word` following `context`.
    fn prob(&self, context: u32, word: u32) -> Result<f64>;

    /// Full conditional distribution for `context`.
    fn conditional(&self, context: u32) -> Result<ProbDist> {
        let d = self.alphabet_size();
        let mass = (0..d as u32)
            .map(|w| self.prob(context, w))
            .collect::<Result<Vec<_>>>()?;
        ProbDist::new(mass)
    }
}

impl<M: ConditionalModel + ?Sized> ConditionalModel for &M {
    fn alphabet_size(&self) -> usize {
        (**self).alphabet_size()
    }

    fn prob(&self, context: u32, word: u32) -> Result<f64> {
        (**self).prob(context, word)
    }

    fn conditional(&self, context: u32) -> Result<ProbDist> {
        (**self).conditional(context)
    }
}

/// A model backed by an explicit table of conditional distributions.
#[derive(Debug, Clone)]
pub struct TableModel {
    d: usize,
    rows: Vec<Option<ProbDist>>,
}

impl TableModel {
    /// Every provided row must live on the same alphabet of size `d`.
    pub fn new(d: usize, rows: Vec<Option<ProbDist>>) -> Result<Self> {
        for row in rows.iter().flatten() {
            if row.len() != d {
                return Err(Error::AlphabetMismatch {
                    left: d,
                    right: row.len(),
                });
            }
        }
        Ok(Self { d, rows })
    }

    /// Materializes every context `0..contexts` of another model.
    pub fn materialize<M: ConditionalModel + ?Sized>(model: &M, contexts: usize) -> Self {
        let rows = (0..contexts as u32)
            .into_par_iter()
            .map(|c| model.conditional(c).ok())
            .collect();
        Self {
            d: model.alphabet_size(),
            rows,
        }
    }

    pub fn row(&self, context: u32) -> Option<&ProbDist> {
        self.rows.get(context as usize).and_then(|r| r.as_ref())
    }
}

impl ConditionalModel for TableModel {
    fn alphabet_size(&self) -> usize {
        self.d
    }

    fn prob(&self, context: u32, word: u32) -> Result<f64> {
        let row = self.row(context).ok_or(Error::UnseenContext(context))?;
        Ok(row.get(word as usize))
    }

    fn conditional(&self, context: u32) -> Result<ProbDist> {
        self.row(context)
            .cloned()
            .ok_or(Error::UnseenContext(context))
    }
}

/// Test data as a list of (context, word) events for a bigram (`k = 2`) model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSequence {
    events: Vec<(u32, u32)>,
    order: usize,
}

impl TestSequence {
    /// Bigram events from a flat token stream. With `start = Some(bos)` the
    /// first token is predicted from the sentinel; otherwise prediction starts
    /// at the second token.
    pub fn from_tokens(tokens: &[u32], start: Option<u32>) -> Result<Self> {
        let mut events = Vec::with_capacity(tokens.len());
        if let (Some(bos), Some(&first)) = (start, tokens.first()) {
            events.push((bos, first));
        }
        events.extend(tokens.windows(2).map(|w| (w[0], w[1])));
        Self::from_events(events)
    }

    /// Bigram events within each sentence; sentences do not share context.
    pub fn from_sentences(sentences: &[Vec<u32>]) -> Result<Self> {
        let events = sentences
            .iter()
            .flat_map(|s| s.windows(2).map(|w| (w[0], w[1])))
            .collect();
        Self::from_events(events)
    }

    pub fn from_events(events: Vec<(u32, u32)>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(Self { events, order: 2 })
    }

    pub fn events(&self) -> &[(u32, u32)] {
        &self.events
    }

    /// Number of predicted tokens.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Context order `k`.
    pub fn order(&self) -> usize {
        self.order
    }
}

/// `-(1/T) sum_i ln p(v_i | c_i)`.
pub fn log_perplexity<M: ConditionalModel + ?Sized>(model: &M, seq: &TestSequence) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    for &(c, w) in seq.events() {
        let p = model.prob(c, w)?;
        if p <= 0.0 {
            return Err(Error::InfiniteDivergence { symbol: w });
        }
        acc.add(-p.ln());
    }
    Ok(acc.value() / seq.len() as f64)
}

/// Per-context terms of the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTerms {
    pub context: u32,
    /// Empirical context frequency in the test sequence.
    pub weight: f64,
    pub entropy: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub log_ppl: f64,
    pub entropy_term: f64,
    pub kl_term: f64,
    pub per_context: Vec<ContextTerms>,
}

impl DecompositionReport {
    pub fn perplexity(&self) -> f64 {
        self.log_ppl.exp()
    }

    /// `exp(entropy_term)`, the perplexity no model can beat on this sequence.
    pub fn entropy_bound(&self) -> f64 {
        self.entropy_term.exp()
    }
}

/// Empirical conditional counts of the test sequence, grouped by context.
fn group_by_context(seq: &TestSequence) -> BTreeMap<u32, BTreeMap<u32, u64>> {
    let mut groups: BTreeMap<u32, BTreeMap<u32, u64>> = BTreeMap::new();
    for &(c, w) in seq.events() {
        *groups.entry(c).or_default().entry(w).or_insert(0) += 1;
    }
    groups
}

/// Splits log-perplexity into `sum_c p(c) H(p(.|c)) + sum_c p(c) d(p(.|c) || model(.|c))`.
///
/// `log_ppl` is computed token by token; the two terms are computed from the
/// grouped empirical conditionals, so the identity between them is a real check.
pub fn decompose<M: ConditionalModel + ?Sized>(
    model: &M,
    seq: &TestSequence,
) -> Result<DecompositionReport> {
    let log_ppl = log_perplexity(model, seq)?;
    let total = seq.len() as f64;
    let groups: Vec<(u32, BTreeMap<u32, u64>)> = group_by_context(seq).into_iter().collect();

    let per_context = groups
        .par_iter()
        .map(|(c, successors)| {
            let n_c: u64 = successors.values().sum();
            let n_c_f = n_c as f64;
            let mut h = NeumaierSum::new();
            let mut kl = NeumaierSum::new();
            for (&w, &count) in successors {
                let p = count as f64 / n_c_f;
                let q = model.prob(*c, w)?;
                if q <= 0.0 {
                    return Err(Error::InfiniteDivergence { symbol: w });
                }
                h.add(-p * p.ln());
                kl.add(p * (p / q).ln());
            }
            Ok(ContextTerms {
                context: *c,
                weight: n_c_f / total,
                entropy: h.value(),
                kl: kl.value(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let entropy_term = accum::sum(per_context.iter().map(|t| t.weight * t.entropy));
    let kl_term = accum::sum(per_context.iter().map(|t| t.weight * t.kl));
    Ok(DecompositionReport {
        log_ppl,
        entropy_term,
        kl_term,
        per_context,
    })
}

/// Empirical conditional distributions of a sequence as a model.
pub fn empirical_model(seq: &TestSequence, d: usize) -> Result<TableModel> {
    let groups = group_by_context(seq);
    let contexts = groups.keys().next_back().map_or(0, |c| *c as usize + 1);
    let mut rows = vec![None; contexts];
    for (c, successors) in groups {
        let mut mass = vec![0.0; d];
        for (w, count) in successors {
            mass[w as usize] = count as f64;
        }
        rows[c as usize] = Some(ProbDist::from_weights(&mass)?);
    }
    TableModel::new(d, rows)
}
