//! Count-based estimators of a next-symbol distribution: empirical, add-beta,
//! variable add-constant, Kneser-Ney and Jelinek-Mercer.
//!
//! The free functions estimate a single distribution. [`BigramModel`] wraps a
//! [`CountTable`] and a [`SmootherConfig`] into a [`ConditionalModel`] that
//! answers point queries without materializing rows.

use serde::{Deserialize, Serialize};

use crate::accum;
use crate::corpus::CountTable;
use crate::error::{Error, Result};
use crate::prob::{ConditionalModel, ProbDist};

/// Per-count constants `beta_r` of the variable add-constant estimator.
///
/// `values[r]` is used for a symbol seen `r` times; counts past the end of the
/// table use `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTable {
    values: Vec<f64>,
    tail: f64,
}

impl BetaTable {
    /// Every constant must lie in `[1/2, 1]`, which keeps each one at least
    /// one half and their sum over any alphabet at most its size.
    pub fn new(values: Vec<f64>, tail: f64) -> Result<Self> {
        for &b in values.iter().chain(std::iter::once(&tail)) {
            if !(0.5..=1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!(
                    "beta_r = {b} outside [0.5, 1]"
                )));
            }
        }
        Ok(Self { values, tail })
    }

    pub fn constant(beta: f64) -> Result<Self> {
        Self::new(Vec::new(), beta)
    }

    /// Krichevsky-Trofimov: `beta_r = 1/2` for every `r`.
    pub fn krichevsky_trofimov() -> Self {
        Self {
            values: Vec::new(),
            tail: 0.5,
        }
    }

    pub fn get(&self, r: u64) -> f64 {
        usize::try_from(r)
            .ok()
            .and_then(|r| self.values.get(r))
            .copied()
            .unwrap_or(self.tail)
    }
}

impl Default for BetaTable {
    fn default() -> Self {
        Self::krichevsky_trofimov()
    }
}

fn total(counts: &[u64]) -> u64 {
    counts.iter().sum()
}

/// `p_i = N_i / n`. Fails when there are no observations.
pub fn empirical(counts: &[u64]) -> Result<ProbDist> {
    let n = total(counts);
    if n == 0 {
        return Err(Error::InvalidParameter(
            "empirical estimate needs at least one observation".into(),
        ));
    }
    ProbDist::new(counts.iter().map(|&c| c as f64 / n as f64).collect())
}

/// `p_i = (N_i + beta) / (n + beta d)`.
pub fn add_beta(counts: &[u64], beta: f64) -> Result<ProbDist> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    if counts.is_empty() {
        return Err(Error::InvalidParameter("empty alphabet".into()));
    }
    let denom = total(counts) as f64 + beta * counts.len() as f64;
    ProbDist::new(counts.iter().map(|&c| (c as f64 + beta) / denom).collect())
}

/// `p_i ∝ N_i + beta_{N_i}`.
pub fn variable_add_constant(counts: &[u64], table: &BetaTable) -> Result<ProbDist> {
    if counts.is_empty() {
        return Err(Error::InvalidParameter("empty alphabet".into()));
    }
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 + table.get(c)).collect();
    ProbDist::from_weights(&weights)
}

/// Raw continuation distribution `P_cont(w) = N1+(., w) / N1+(., .)`.
pub fn continuation_distribution(table: &CountTable) -> Result<ProbDist> {
    let distinct = table.distinct_bigrams();
    if distinct == 0 {
        return Err(Error::InvalidParameter("no bigrams observed".into()));
    }
    ProbDist::new(
        (0..table.alphabet_size() as u32)
            .map(|w| table.distinct_predecessors(w) as f64 / distinct as f64)
            .collect(),
    )
}

fn check_discount(discount: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::InvalidParameter(format!(
            "discount {discount} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Interpolated Kneser-Ney with absolute discount `D`:
///
/// `p(w|c) = max(N_{c,w} - D, 0) / N_c + D N1+(c,.) / N_c * P_cont(w)`.
///
/// Words never seen as a continuation get zero mass; see [`BigramModel`] for
/// the fully smoothed variant.
pub fn kneser_ney(table: &CountTable, context: u32, discount: f64) -> Result<ProbDist> {
    check_discount(discount)?;
    let row = table.row(context);
    if row.total == 0 {
        return Err(Error::UnseenContext(context));
    }
    let cont = continuation_distribution(table)?;
    let n_c = row.total as f64;
    let lambda = discount * row.distinct() as f64 / n_c;
    let mut mass: Vec<f64> = cont.masses().iter().map(|p| lambda * p).collect();
    for &(w, n) in &row.successors {
        mass[w as usize] += (n as f64 - discount).max(0.0) / n_c;
    }
    ProbDist::new(mass)
}

/// Add-one unigram distribution over successor occurrences.
pub fn unigram_distribution(table: &CountTable) -> ProbDist {
    let d = table.alphabet_size();
    let denom = table.total() as f64 + d as f64;
    ProbDist::new(
        (0..d as u32)
            .map(|w| (table.successor_total(w) as f64 + 1.0) / denom)
            .collect(),
    )
    .expect("add-one unigram is a distribution")
}

/// `lambda * empirical(w|c) + (1 - lambda) * unigram(w)`.
pub fn jelinek_mercer(table: &CountTable, context: u32, lambda: f64) -> Result<ProbDist> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    let unigram = unigram_distribution(table);
    let row = table.row(context);
    if row.total == 0 {
        if lambda > 0.0 {
            return Err(Error::UnseenContext(context));
        }
        return Ok(unigram);
    }
    let mut mass: Vec<f64> = unigram.masses().iter().map(|p| (1.0 - lambda) * p).collect();
    for &(w, n) in &row.successors {
        mass[w as usize] += lambda * n as f64 / row.total as f64;
    }
    ProbDist::new(mass)
}

/// Which estimator a [`BigramModel`] applies to each context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmootherConfig {
    Empirical,
    AddBeta { beta: f64 },
    VariableAddConstant { table: BetaTable },
    KneserNey { discount: f64 },
    JelinekMercer { lambda: f64 },
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SmootherConfig::Empirical => Ok(()),
            SmootherConfig::AddBeta { beta } => {
                if *beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("beta = {beta} must be positive")))
                }
            }
            SmootherConfig::VariableAddConstant { table } => {
                BetaTable::new(table.values.clone(), table.tail).map(|_| ())
            }
            SmootherConfig::KneserNey { discount } => check_discount(*discount),
            SmootherConfig::JelinekMercer { lambda } => {
                if (0.0..=1.0).contains(lambda) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")))
                }
            }
        }
    }
}

/// A bigram model over a count table.
///
/// Kneser-Ney here backs its continuation distribution off to the uniform
/// distribution with the same discount, so every word gets positive mass, and
/// unseen contexts use that smoothed continuation distribution directly.
#[derive(Debug, Clone)]
pub struct BigramModel {
    counts: CountTable,
    config: SmootherConfig,
    /// Smoothed continuation (KN) or unigram (JM) distribution.
    lower_order: Option<Vec<f64>>,
    /// Per-context normalizers of the variable add-constant estimator.
    vac_denominators: Option<Vec<f64>>,
}

impl BigramModel {
    pub fn new(counts: CountTable, config: SmootherConfig) -> Result<Self> {
        config.validate()?;
        let d = counts.alphabet_size();
        let lower_order = match &config {
            SmootherConfig::KneserNey { discount } => {
                Some(smoothed_continuation(&counts, *discount))
            }
            SmootherConfig::JelinekMercer { .. } => {
                Some(unigram_distribution(&counts).into_inner())
            }
            _ => None,
        };
        let vac_denominators = match &config {
            SmootherConfig::VariableAddConstant { table } => Some(
                (0..d as u32)
                    .map(|c| {
                        let row = counts.row(c);
                        let seen = accum::sum(row.successors.iter().map(|&(_, n)| table.get(n)));
                        row.total as f64 + seen + (d - row.distinct()) as f64 * table.get(0)
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(Self {
            counts,
            config,
            lower_order,
            vac_denominators,
        })
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }
}

/// Continuation distribution interpolated with the uniform distribution:
/// `max(N1+(.,w) - D, 0) / N1+(.,.) + D |{w : N1+(.,w) > 0}| / N1+(.,.) / d`.
fn smoothed_continuation(counts: &CountTable, discount: f64) -> Vec<f64> {
    let d = counts.alphabet_size();
    let distinct = counts.distinct_bigrams() as f64;
    if distinct == 0.0 {
        return vec![1.0 / d as f64; d];
    }
    let types = (0..d as u32)
        .filter(|&w| counts.distinct_predecessors(w) > 0)
        .count() as f64;
    let backoff = discount * types / distinct / d as f64;
    (0..d as u32)
        .map(|w| (counts.distinct_predecessors(w) as f64 - discount).max(0.0) / distinct + backoff)
        .collect()
}

impl ConditionalModel for BigramModel {
    fn alphabet_size(&self) -> usize {
        self.counts.alphabet_size()
    }

    fn prob(&self, context: u32, word: u32) -> Result<f64> {
        let d = self.counts.alphabet_size();
        if word as usize >= d {
            return Err(Error::InvalidParameter(format!("word id {word} outside alphabet")));
        }
        let row = self.counts.row(context);
        let n_cw = row.count(word) as f64;
        let n_c = row.total as f64;
        match &self.config {
            SmootherConfig::Empirical => {
                if row.total == 0 {
                    return Err(Error::UnseenContext(context));
                }
                Ok(n_cw / n_c)
            }
            SmootherConfig::AddBeta { beta } => Ok((n_cw + beta) / (n_c + beta * d as f64)),
            SmootherConfig::VariableAddConstant { table } => {
                let denom = self.vac_denominators.as_ref().expect("vac normalizers")
                    [context as usize];
                Ok((n_cw + table.get(row.count(word))) / denom)
            }
            SmootherConfig::KneserNey { discount } => {
                let cont = self.lower_order.as_ref().expect("continuation")[word as usize];
                if row.total == 0 {
                    return Ok(cont);
                }
                let lambda = discount * row.distinct() as f64 / n_c;
                Ok((n_cw - discount).max(0.0) / n_c + lambda * cont)
            }
            SmootherConfig::JelinekMercer { lambda } => {
                let uni = self.lower_order.as_ref().expect("unigram")[word as usize];
                if row.total == 0 {
                    if *lambda > 0.0 {
                        return Err(Error::UnseenContext(context));
                    }
                    return Ok(uni);
                }
                Ok(lambda * n_cw / n_c + (1.0 - lambda) * uni)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use approx::assert_abs_diff_eq;

    /// Bigrams {(a,b):2, (a,c):1, (b,a):1} over the alphabet {a, b, c} = {0, 1, 2}.
    fn toy_table() -> CountTable {
        CountTable::from_bigram_counts(3, [((0, 1), 2), ((0, 2), 1), ((1, 0), 1)])
    }

    #[test]
    fn add_beta_hand_values() {
        let p = add_beta(&[2, 0, 1], 1.0).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(2), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn add_beta_limits() {
        for beta in [0.01, 1.0, 7.0] {
            let p = add_beta(&[0, 0, 0, 0], beta).unwrap();
            assert!(p.masses().iter().all(|m| (m - 0.25).abs() < 1e-15));
        }
        let p = add_beta(&[100, 0, 3], 1e9).unwrap();
        assert!(p.masses().iter().all(|m| (m - 1.0 / 3.0).abs() < 1e-6));
        assert!(add_beta(&[1, 2], 0.0).is_err());
    }

    #[test]
    fn vac_krichevsky_trofimov() {
        let p = variable_add_constant(&[1, 0], &BetaTable::default()).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn vac_constant_table_is_add_beta() {
        let counts = [5, 0, 2, 9, 1];
        for beta in [0.5, 0.75, 1.0] {
            let a = variable_add_constant(&counts, &BetaTable::constant(beta).unwrap()).unwrap();
            let b = add_beta(&counts, beta).unwrap();
            for (x, y) in a.masses().iter().zip(b.masses()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn vac_symmetric_counts() {
        let table = BetaTable::new(vec![0.5, 0.9, 0.6, 1.0], 0.7).unwrap();
        let p = variable_add_constant(&[3, 3], &table).unwrap();
        assert_eq!(p.masses(), &[0.5, 0.5]);
    }

    #[test]
    fn beta_table_rejects_out_of_range() {
        assert!(BetaTable::constant(0.3).is_err());
        assert!(BetaTable::new(vec![0.5, 1.2], 0.5).is_err());
    }

    #[test]
    fn kneser_ney_toy_fixture() {
        let p = kneser_ney(&toy_table(), 0, 0.5).unwrap();
        assert_abs_diff_eq!(p.get(1), 0.5 + 1.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.get(2), 1.0 / 6.0 + 1.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.get(0), 1.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.get(1), 0.6111, epsilon = 1e-4);
        assert_abs_diff_eq!(p.get(2), 0.2778, epsilon = 1e-4);
    }

    #[test]
    fn kneser_ney_zero_discount_is_empirical() {
        let t = toy_table();
        let p = kneser_ney(&t, 0, 0.0).unwrap();
        let e = empirical(&t.dense_row(0)).unwrap();
        assert_eq!(p, e);
    }

    #[test]
    fn kneser_ney_full_discount_singletons() {
        // (a,b), (a,c), (b,c), (c,d): every successor of a is a singleton
        let t = CountTable::from_bigram_counts(4, [((0, 1), 1), ((0, 2), 1), ((1, 2), 1), ((2, 3), 1)]);
        let p = kneser_ney(&t, 0, 1.0).unwrap();
        // lambda_a = 1 * 2 / 2 = 1; P_cont = (0, 1/4, 2/4, 1/4)
        assert_abs_diff_eq!(p.get(0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(3), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn kneser_ney_unseen_context() {
        assert_eq!(kneser_ney(&toy_table(), 2, 0.5), Err(Error::UnseenContext(2)));
    }

    #[test]
    fn jelinek_mercer_endpoints_and_mixture() {
        let t = toy_table();
        // successor totals a:1, b:2, c:1; add-one over d = 3 -> (2, 3, 2) / 7
        let uni = [2.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0];
        let p0 = jelinek_mercer(&t, 0, 0.0).unwrap();
        for (x, y) in p0.masses().iter().zip(uni) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
        let p1 = jelinek_mercer(&t, 0, 1.0).unwrap();
        assert_eq!(p1, empirical(&t.dense_row(0)).unwrap());
        let half = jelinek_mercer(&t, 0, 0.5).unwrap();
        let expected = [1.0 / 7.0, 1.0 / 3.0 + 1.5 / 7.0, 1.0 / 6.0 + 1.0 / 7.0];
        for (x, y) in half.masses().iter().zip(expected) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
        assert_eq!(jelinek_mercer(&t, 2, 0.5), Err(Error::UnseenContext(2)));
        assert!(jelinek_mercer(&t, 2, 0.0).is_ok());
    }

    #[test]
    fn model_matches_free_functions() {
        let t = toy_table();
        let cases = [
            (SmootherConfig::AddBeta { beta: 0.3 }, add_beta(&t.dense_row(0), 0.3).unwrap()),
            (
                SmootherConfig::VariableAddConstant { table: BetaTable::default() },
                variable_add_constant(&t.dense_row(0), &BetaTable::default()).unwrap(),
            ),
            (SmootherConfig::JelinekMercer { lambda: 0.5 }, jelinek_mercer(&t, 0, 0.5).unwrap()),
            (SmootherConfig::Empirical, empirical(&t.dense_row(0)).unwrap()),
        ];
        for (cfg, expected) in cases {
            let m = BigramModel::new(t.clone(), cfg).unwrap();
            let got = m.conditional(0).unwrap();
            for (x, y) in got.masses().iter().zip(expected.masses()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn kn_model_backs_off_and_is_positive() {
        let mut v = Vocabulary::new();
        let s = v.intern_sentences(&crate::corpus::preprocess("a b a c. b c a. c a b b."));
        let d = v.len() + 2; // two words that never occur in training
        let t = CountTable::from_sentences(&s, d);
        let m = BigramModel::new(t.clone(), SmootherConfig::KneserNey { discount: 0.6 }).unwrap();
        for c in 0..d as u32 {
            let p = m.conditional(c).unwrap();
            assert!(p.masses().iter().all(|x| *x > 0.0));
        }
        // observed contexts keep the discounted bigram structure
        let a = v.id("a").unwrap();
        let b = v.id("b").unwrap();
        assert!(m.prob(a, b).unwrap() > m.prob(a, a).unwrap());
    }
}
