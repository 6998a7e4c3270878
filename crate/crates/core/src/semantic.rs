//! Semantic smoothing: interpolating a context's estimated next-word
//! distribution with the estimates of nearby contexts.
//!
//! Two paths live here. The theory path ([`interpolation_estimate`],
//! [`plugin_estimate`]) picks a single source with weight 0 or 1 by comparing
//! risk bounds. The practice path ([`compute_weights`], [`SemanticModel`])
//! spreads weight over the context and its synonyms by applying a decreasing
//! function to each source's loss proxy.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum;
use crate::embeddings::SynonymIndex;
use crate::error::{Error, Result};
use crate::estimators::{variable_add_constant, BetaTable};
use crate::prob::{ConditionalModel, ProbDist};

/// Tolerance on the total interpolation weight.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    /// `phi(x) = 1 / x`.
    Reciprocal,
    /// `phi(x) = exp(-tau x)`.
    Softmin,
}

/// Maps loss proxies to interpolation weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRule {
    pub phi: Phi,
    pub tau: f64,
    /// Proxies are clamped below at this value before `phi` is applied.
    pub floor: f64,
}

impl Default for WeightRule {
    fn default() -> Self {
        Self {
            phi: Phi::Reciprocal,
            tau: 1.0,
            floor: 1e-9,
        }
    }
}

impl WeightRule {
    pub fn reciprocal() -> Self {
        Self::default()
    }

    pub fn softmin(tau: f64) -> Self {
        Self {
            phi: Phi::Softmin,
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "proxy floor {} must be positive",
                self.floor
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature {} must be positive",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Loss proxy of a context's own estimate: `(d - 1) / (2 n)`, infinite when `n = 0`.
pub fn self_proxy(support: u64, occurrences: u64) -> f64 {
    if occurrences == 0 {
        return f64::INFINITY;
    }
    (support.max(1) - 1) as f64 / (2.0 * occurrences as f64)
}

/// Loss proxy of a synonym's estimate:
/// `delta + ln(1 + beta d / n) + max(ln(1 / beta), 0)`, infinite when `n = 0`.
pub fn synonym_proxy(delta: f64, support: u64, occurrences: u64, beta: f64) -> f64 {
    if occurrences == 0 {
        return f64::INFINITY;
    }
    delta + (1.0 + beta * support as f64 / occurrences as f64).ln() + (1.0 / beta).ln().max(0.0)
}

/// Normalized weights `phi(proxy_j) / sum_k phi(proxy_k)`, own estimate first.
///
/// Infinite proxies get zero weight. If every proxy is infinite the context
/// keeps all of its own weight.
pub fn compute_weights(self_proxy: f64, synonym_proxies: &[f64], rule: &WeightRule) -> Vec<f64> {
    let proxies: Vec<f64> = std::iter::once(self_proxy)
        .chain(synonym_proxies.iter().copied())
        .map(|x| if x.is_nan() { f64::INFINITY } else { x.max(rule.floor) })
        .collect();
    let raw: Vec<f64> = match rule.phi {
        Phi::Reciprocal => proxies.iter().map(|x| 1.0 / x).collect(),
        Phi::Softmin => {
            let lo = proxies.iter().copied().fold(f64::INFINITY, f64::min);
            proxies
                .iter()
                .map(|x| {
                    if x.is_finite() {
                        (-rule.tau * (x - lo)).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let total = accum::sum(raw.iter().copied());
    if !(total > 0.0) {
        let mut w = vec![0.0; proxies.len()];
        w[0] = 1.0;
        return w;
    }
    raw.iter().map(|r| r / total).collect()
}

/// Pointwise convex combination `main_weight * main + sum_j weight_j * side_j`.
pub fn interpolate(main: &ProbDist, main_weight: f64, side: &[(&ProbDist, f64)]) -> Result<ProbDist> {
    let weights = std::iter::once(main_weight).chain(side.iter().map(|(_, w)| *w));
    if weights.clone().any(|w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be nonnegative".into()));
    }
    let total = accum::sum(weights);
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::WeightSumViolation(total));
    }
    for (p, _) in side {
        if p.len() != main.len() {
            return Err(Error::AlphabetMismatch {
                left: main.len(),
                right: p.len(),
            });
        }
    }
    let mass: Vec<f64> = (0..main.len())
        .map(|i| {
            let mut acc = accum::NeumaierSum::new();
            acc.add(main_weight * main.get(i));
            for (p, w) in side {
                acc.add(w * p.get(i));
            }
            acc.value()
        })
        .collect();
    ProbDist::new(mass)
}

/// One interpolation partner of a context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synonym {
    pub context: u32,
    pub delta: f64,
    pub proxy: f64,
    pub weight: f64,
}

/// A context together with its chosen synonyms and interpolation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymSet {
    pub context: u32,
    pub m: usize,
    pub self_proxy: f64,
    pub self_weight: f64,
    /// Sorted by ascending proxy.
    pub synonyms: Vec<Synonym>,
}

impl SynonymSet {
    /// A set that leaves the context's own estimate untouched.
    pub fn identity(context: u32, m: usize) -> Self {
        Self {
            context,
            m,
            self_proxy: f64::INFINITY,
            self_weight: 1.0,
            synonyms: Vec::new(),
        }
    }

    pub fn total_weight(&self) -> f64 {
        accum::sum(std::iter::once(self.self_weight).chain(self.synonyms.iter().map(|s| s.weight)))
    }
}

/// Where the `d` in the loss proxies comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyAlphabet {
    /// Estimated successor support of each context.
    #[default]
    Estimated,
    /// The full vocabulary size.
    Full,
}

/// Everything needed to turn a base model into its semantically smoothed version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticConfig {
    pub m: usize,
    pub rule: WeightRule,
    /// Add-constant used in the synonym score and loss proxy.
    pub beta: f64,
    pub proxy_alphabet: ProxyAlphabet,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            m: 10,
            rule: WeightRule::default(),
            beta: 0.005,
            proxy_alphabet: ProxyAlphabet::Estimated,
        }
    }
}

/// Chooses synonyms for `context` and fills in proxies and weights.
/// A context without an embedding gets an identity set.
pub fn build_synonym_set(index: &SynonymIndex<'_>, context: u32, cfg: &SemanticConfig) -> SynonymSet {
    let candidates = match index.select(context, cfg.m) {
        Ok(c) if !c.is_empty() => c,
        _ => return SynonymSet::identity(context, cfg.m),
    };
    let full = index.embeddings().len() as u64;
    let alphabet = |c: u32| match cfg.proxy_alphabet {
        ProxyAlphabet::Estimated => index.support(c),
        ProxyAlphabet::Full => full,
    };
    let own = self_proxy(alphabet(context), index.occurrences(context));
    let mut synonyms: Vec<Synonym> = candidates
        .iter()
        .map(|cand| Synonym {
            context: cand.context,
            delta: cand.delta,
            proxy: synonym_proxy(cand.delta, alphabet(cand.context), index.occurrences(cand.context), cfg.beta),
            weight: 0.0,
        })
        .collect();
    synonyms.sort_by(|a, b| a.proxy.total_cmp(&b.proxy).then(a.context.cmp(&b.context)));
    let proxies: Vec<f64> = synonyms.iter().map(|s| s.proxy).collect();
    let weights = compute_weights(own, &proxies, &cfg.rule);
    for (s, w) in synonyms.iter_mut().zip(&weights[1..]) {
        s.weight = *w;
    }
    SynonymSet {
        context,
        m: cfg.m,
        self_proxy: own,
        self_weight: weights[0],
        synonyms,
    }
}

/// Synonym sets for many contexts, computed in parallel.
pub fn build_synonym_sets(
    index: &SynonymIndex<'_>,
    contexts: &[u32],
    cfg: &SemanticConfig,
) -> Result<Vec<SynonymSet>> {
    cfg.rule.validate()?;
    if !(cfg.beta > 0.0 && cfg.beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta = {} must be positive", cfg.beta)));
    }
    Ok(contexts
        .par_iter()
        .map(|&c| build_synonym_set(index, c, cfg))
        .collect())
}

/// Drops sources the base model cannot serve and renormalizes what is left.
/// Returns `None` if nothing remains.
fn usable_weights<M: ConditionalModel + ?Sized>(base: &M, set: &SynonymSet) -> Option<Vec<(u32, f64)>> {
    let sources = std::iter::once((set.context, set.self_weight))
        .chain(set.synonyms.iter().map(|s| (s.context, s.weight)));
    let kept: Vec<(u32, f64)> = sources
        .filter(|(c, w)| *w > 0.0 && base.prob(*c, 0).is_ok())
        .collect();
    let total = accum::sum(kept.iter().map(|(_, w)| *w));
    if kept.is_empty() || !(total > 0.0) {
        return None;
    }
    Some(kept.into_iter().map(|(c, w)| (c, w / total)).collect())
}

/// The smoothed distribution of one context:
/// `alpha_c p(.|c) + sum_i alpha_i p(.|c_i)`.
pub fn smooth_context<M: ConditionalModel + ?Sized>(base: &M, set: &SynonymSet) -> Result<ProbDist> {
    if set.synonyms.is_empty() {
        return base.conditional(set.context);
    }
    let Some(weights) = usable_weights(base, set) else {
        return base.conditional(set.context);
    };
    let d = base.alphabet_size();
    let mut mass = vec![0.0; d];
    for (c, w) in weights {
        let p = base.conditional(c)?;
        for (m, x) in mass.iter_mut().zip(p.masses()) {
            *m += w * x;
        }
    }
    ProbDist::new(mass)
}

/// A base model with some contexts replaced by their smoothed versions.
#[derive(Debug, Clone)]
pub struct SemanticModel<M> {
    base: M,
    mixtures: HashMap<u32, Vec<(u32, f64)>>,
}

impl<M: ConditionalModel> SemanticModel<M> {
    pub fn new(base: M, sets: &[SynonymSet]) -> Self {
        let mixtures = sets
            .iter()
            .filter(|s| !s.synonyms.is_empty())
            .filter_map(|s| usable_weights(&base, s).map(|w| (s.context, w)))
            .collect();
        Self { base, mixtures }
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    /// Contexts whose distribution differs from the base model.
    pub fn smoothed_contexts(&self) -> usize {
        self.mixtures.len()
    }
}

impl<M: ConditionalModel> ConditionalModel for SemanticModel<M> {
    fn alphabet_size(&self) -> usize {
        self.base.alphabet_size()
    }

    fn prob(&self, context: u32, word: u32) -> Result<f64> {
        match self.mixtures.get(&context) {
            None => self.base.prob(context, word),
            Some(mix) => {
                let mut acc = accum::NeumaierSum::new();
                for &(c, w) in mix {
                    acc.add(w * self.base.prob(c, word)?);
                }
                Ok(acc.value())
            }
        }
    }
}

/// Result of a single-synonym estimate with a 0/1 interpolation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceChoice {
    pub estimate: ProbDist,
    /// Weight on the estimate from the target's own samples.
    pub alpha: f64,
    pub own_bound: f64,
    pub side_bound: f64,
}

fn own_bound(d: usize, n: u64) -> f64 {
    if n == 0 {
        f64::INFINITY
    } else {
        (d as f64 - 1.0) / (2.0 * n as f64)
    }
}

/// `alpha * vac(X) + (1 - alpha) * side` with a known side distribution at KL
/// distance at most `delta`; `alpha = 1` iff `(d - 1) / (2n) <= delta`.
pub fn interpolation_estimate(
    counts: &[u64],
    side: &ProbDist,
    delta: f64,
    table: &BetaTable,
) -> Result<SourceChoice> {
    if side.len() != counts.len() {
        return Err(Error::AlphabetMismatch {
            left: counts.len(),
            right: side.len(),
        });
    }
    let n: u64 = counts.iter().sum();
    let own = own_bound(counts.len(), n);
    if own <= delta {
        Ok(SourceChoice {
            estimate: variable_add_constant(counts, table)?,
            alpha: 1.0,
            own_bound: own,
            side_bound: delta,
        })
    } else {
        Ok(SourceChoice {
            estimate: side.clone(),
            alpha: 0.0,
            own_bound: own,
            side_bound: delta,
        })
    }
}

/// Plug-in estimate from target samples `x_counts` and synonym samples
/// `y_counts` over the same alphabet. The synonym's distribution is itself
/// estimated by the variable add-constant rule; the source with the smaller
/// bound, `(d - 1) / (2n)` or `delta + ln(1 + d0 / n0) + ln 2`, gets all the weight.
pub fn plugin_estimate(
    x_counts: &[u64],
    y_counts: &[u64],
    delta: f64,
    table: &BetaTable,
) -> Result<SourceChoice> {
    if x_counts.len() != y_counts.len() {
        return Err(Error::AlphabetMismatch {
            left: x_counts.len(),
            right: y_counts.len(),
        });
    }
    let d = x_counts.len();
    let n: u64 = x_counts.iter().sum();
    let n0: u64 = y_counts.iter().sum();
    let own = own_bound(d, n);
    let side = if n0 == 0 {
        f64::INFINITY
    } else {
        delta + (1.0 + d as f64 / n0 as f64).ln() + std::f64::consts::LN_2
    };
    let (estimate, alpha) = if own <= side {
        (variable_add_constant(x_counts, table)?, 1.0)
    } else {
        (variable_add_constant(y_counts, table)?, 0.0)
    };
    Ok(SourceChoice {
        estimate,
        alpha,
        own_bound: own,
        side_bound: side,
    })
}
