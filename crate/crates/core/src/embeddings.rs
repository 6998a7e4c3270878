//! Embedding tables, embedding-derived KL proximity, support-size estimation
//! and synonym selection.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextRow, CountTable, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    /// `token v1 ... vt` per line.
    GloveText,
    /// Same as GloVe with a leading `count dim` header line.
    Word2VecText,
}

/// Token -> vector map with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Later duplicates replace
    /// earlier ones.
    pub fn from_vectors<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = Self {
            dim: 0,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        };
        for (i, (token, v)) in entries.into_iter().enumerate() {
            table.insert(token, v, i + 1)?;
        }
        if table.tokens.is_empty() {
            return Err(Error::EmptyTable);
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, v: Vec<f64>, line: usize) -> Result<()> {
        if v.is_empty() {
            return Err(Error::Format {
                line,
                message: format!("token {token:?} has no components"),
            });
        }
        if self.tokens.is_empty() && self.dim == 0 {
            self.dim = v.len();
        } else if v.len() != self.dim {
            return Err(Error::Format {
                line,
                message: format!("dimension {} differs from {}", v.len(), self.dim),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format {
                line,
                message: format!("non-finite component for token {token:?}"),
            });
        }
        if let Some(&row) = self.index.get(&token) {
            self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(&v);
            self.duplicates += 1;
        } else {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
            self.data.extend_from_slice(&v);
        }
        Ok(())
    }

    pub fn parse<R: BufRead>(input: R, format: EmbeddingFormat) -> Result<Self> {
        let mut table = Self {
            dim: 0,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        };
        let mut header: Option<(usize, usize)> = None;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            if format == EmbeddingFormat::Word2VecText && header.is_none() {
                let parse = |f: Option<&str>| -> Result<usize> {
                    f.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format {
                        line: line_no,
                        message: "expected header `count dim`".into(),
                    })
                };
                let count = parse(fields.next())?;
                let dim = parse(fields.next())?;
                if fields.next().is_some() || dim == 0 {
                    return Err(Error::Format {
                        line: line_no,
                        message: "expected header `count dim`".into(),
                    });
                }
                header = Some((count, dim));
                table.dim = dim;
                continue;
            }
            let token = fields.next().expect("nonempty line").to_owned();
            let v = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| Error::Format {
                        line: line_no,
                        message: format!("non-numeric field {f:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            table.insert(token, v, line_no)?;
        }
        if table.tokens.is_empty() {
            return Err(Error::EmptyTable);
        }
        Ok(table)
    }

    pub fn load(path: &Path, format: EmbeddingFormat) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(std::io::BufReader::new(file), format)
    }

    /// Writes the table in GloVe text format.
    pub fn write_glove<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, token) in self.tokens.iter().enumerate() {
            write!(out, "{token}")?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {x:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of lines whose token had already been seen.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    /// Vectors indexed by vocabulary id; tokens without a vector are absent.
    pub fn align(&self, vocab: &Vocabulary) -> ContextEmbeddings {
        ContextEmbeddings::from_rows(
            self.dim,
            vocab.tokens().iter().map(|t| self.get(t).map(<[f64]>::to_vec)),
        )
    }
}

/// Embeddings indexed by context id. For bigrams the context embedding is
/// the previous word's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbeddings {
    dim: usize,
    data: Vec<f64>,
    present: Vec<bool>,
}

impl ContextEmbeddings {
    pub fn from_rows<I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = Option<Vec<f64>>>,
    {
        let mut data = Vec::new();
        let mut present = Vec::new();
        for row in rows {
            match row {
                Some(v) => {
                    assert_eq!(v.len(), dim, "embedding dimension mismatch");
                    data.extend_from_slice(&v);
                    present.push(true);
                }
                None => {
                    data.extend(std::iter::repeat(0.0).take(dim));
                    present.push(false);
                }
            }
        }
        Self { dim, data, present }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn get(&self, context: u32) -> Option<&[f64]> {
        let c = context as usize;
        if self.present.get(c).copied().unwrap_or(false) {
            Some(&self.data[c * self.dim..(c + 1) * self.dim])
        } else {
            None
        }
    }

    /// Number of contexts with a vector.
    pub fn covered(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    /// Lipschitz constant `L`.
    pub lipschitz: f64,
    pub norm: Norm,
    /// Logit error `epsilon`; contributes `4 epsilon` to every proximity.
    pub epsilon: f64,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        Self {
            lipschitz: 5.0,
            norm: Norm::L1,
            epsilon: 0.0,
        }
    }
}

impl ProximityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz constant {} must be positive",
                self.lipschitz
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} must be nonnegative",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Estimated KL proximity `L ||a - b|| + 4 epsilon` between two context
/// embeddings, in nats.
pub fn proximity(a: &[f64], b: &[f64], cfg: &ProximityConfig) -> f64 {
    cfg.lipschitz * cfg.norm.distance(a, b) + 4.0 * cfg.epsilon
}

/// [`proximity`] looked up by token.
pub fn token_proximity(
    a: &str,
    b: &str,
    table: &EmbeddingTable,
    cfg: &ProximityConfig,
) -> Result<f64> {
    let ea = table.get(a).ok_or_else(|| Error::MissingEmbedding(a.to_owned()))?;
    let eb = table.get(b).ok_or_else(|| Error::MissingEmbedding(b.to_owned()))?;
    Ok(proximity(ea, eb, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportEstimator {
    /// Number of distinct observed successors.
    Distinct,
    /// Chao1 lower-bound estimator of species richness.
    #[default]
    Chao1,
}

/// Estimated number of distinct successors of a context; at least 1.
pub fn estimate_support(row: &ContextRow, method: SupportEstimator) -> u64 {
    let observed = row.distinct() as u64;
    let estimate = match method {
        SupportEstimator::Distinct => observed,
        SupportEstimator::Chao1 => {
            let f1 = row.successors.iter().filter(|(_, n)| *n == 1).count() as u64;
            let f2 = row.successors.iter().filter(|(_, n)| *n == 2).count() as u64;
            if f2 > 0 {
                observed + (f1 * f1).div_ceil(2 * f2)
            } else {
                observed + f1 * f1.saturating_sub(1) / 2
            }
        }
    };
    estimate.max(1)
}

/// A synonym candidate ranked by `delta + ln(1 + beta * support / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynonymCandidate {
    pub context: u32,
    pub delta: f64,
    pub score: f64,
}

/// Exact nearest-synonym search over every context that has an embedding and
/// at least one training occurrence.
#[derive(Debug, Clone)]
pub struct SynonymIndex<'a> {
    embeddings: &'a ContextEmbeddings,
    cfg: ProximityConfig,
    /// `(context, ln(1 + beta * support / n))` for every eligible candidate.
    candidates: Vec<(u32, f64)>,
    support: Vec<u64>,
    occurrences: Vec<u64>,
}

impl<'a> SynonymIndex<'a> {
    pub fn new(
        embeddings: &'a ContextEmbeddings,
        counts: &CountTable,
        support_method: SupportEstimator,
        cfg: ProximityConfig,
        beta: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
        }
        let d = counts.alphabet_size();
        let support: Vec<u64> = (0..d as u32)
            .map(|c| estimate_support(counts.row(c), support_method))
            .collect();
        let occurrences: Vec<u64> = (0..d as u32).map(|c| counts.context_total(c)).collect();
        let candidates = (0..d as u32)
            .filter(|&c| occurrences[c as usize] > 0 && embeddings.get(c).is_some())
            .map(|c| {
                let i = c as usize;
                (c, (1.0 + beta * support[i] as f64 / occurrences[i] as f64).ln())
            })
            .collect();
        Ok(Self {
            embeddings,
            cfg,
            candidates,
            support,
            occurrences,
        })
    }

    pub fn proximity_config(&self) -> &ProximityConfig {
        &self.cfg
    }

    pub fn embeddings(&self) -> &ContextEmbeddings {
        self.embeddings
    }

    /// Eligible candidate contexts in id order.
    pub fn candidates(&self) -> impl Iterator<Item = u32> + '_ {
        self.candidates.iter().map(|(c, _)| *c)
    }

    /// Estimated successor-alphabet size of `context`.
    pub fn support(&self, context: u32) -> u64 {
        self.support.get(context as usize).copied().unwrap_or(1)
    }

    /// Training occurrences `n_c` of `context`.
    pub fn occurrences(&self, context: u32) -> u64 {
        self.occurrences.get(context as usize).copied().unwrap_or(0)
    }

    fn score(&self, origin: &[f64], &(c, log_term): &(u32, f64)) -> SynonymCandidate {
        let v = self.embeddings.get(c).expect("candidates have embeddings");
        let delta = proximity(origin, v, &self.cfg);
        SynonymCandidate {
            context: c,
            delta,
            score: delta + log_term,
        }
    }

    /// The `m` best-scoring candidates for `context`, excluding itself, in
    /// ascending (score, id) order. Returns `Ok(vec![])` for `m = 0` and
    /// [`Error::MissingEmbedding`] when `context` has no vector.
    pub fn select(&self, context: u32, m: usize) -> Result<Vec<SynonymCandidate>> {
        let origin = self
            .embeddings
            .get(context)
            .ok_or_else(|| Error::MissingEmbedding(format!("context id {context}")))?;
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut best: Vec<SynonymCandidate> = self
            .candidates
            .par_chunks(1024)
            .flat_map_iter(|chunk| {
                let mut local: Vec<SynonymCandidate> = chunk
                    .iter()
                    .filter(|(c, _)| *c != context)
                    .map(|cand| self.score(origin, cand))
                    .collect();
                keep_best(&mut local, m);
                local
            })
            .collect();
        keep_best(&mut best, m);
        Ok(best)
    }
}

fn candidate_order(a: &SynonymCandidate, b: &SynonymCandidate) -> std::cmp::Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.context.cmp(&b.context))
}

/// Sorts and truncates to the `m` smallest entries.
fn keep_best(v: &mut Vec<SynonymCandidate>, m: usize) {
    if v.len() > m {
        v.select_nth_unstable_by(m, candidate_order);
        v.truncate(m);
    }
    v.sort_unstable_by(candidate_order);
}

/// Writes `context<TAB>synonym<TAB>delta<TAB>score` lines.
pub fn write_synonym_cache<W: Write>(
    vocab: &Vocabulary,
    entries: &[(u32, Vec<SynonymCandidate>)],
    mut out: W,
) -> Result<()> {
    for (c, syns) in entries {
        let ct = vocab.token(*c).unwrap_or("?");
        for s in syns {
            let st = vocab.token(s.context).unwrap_or("?");
            writeln!(out, "{ct}\t{st}\t{:?}\t{:?}", s.delta, s.score)?;
        }
    }
    Ok(())
}

/// Reads a synonym cache. Unknown tokens are reported as format errors.
pub fn read_synonym_cache<R: BufRead>(
    vocab: &Vocabulary,
    input: R,
) -> Result<Vec<(u32, Vec<SynonymCandidate>)>> {
    let mut out: Vec<(u32, Vec<SynonymCandidate>)> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Format {
            line: line_no,
            message,
        };
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let c = vocab.id(f[0]).ok_or_else(|| bad(format!("unknown token {:?}", f[0])))?;
        let s = vocab.id(f[1]).ok_or_else(|| bad(format!("unknown token {:?}", f[1])))?;
        let delta: f64 = f[2].parse().map_err(|_| bad(format!("bad delta {:?}", f[2])))?;
        let score: f64 = f[3].parse().map_err(|_| bad(format!("bad score {:?}", f[3])))?;
        let cand = SynonymCandidate {
            context: s,
            delta,
            score,
        };
        match out.last_mut() {
            Some((last, v)) if *last == c => v.push(cand),
            _ => out.push((c, vec![cand])),
        }
    }
    Ok(out)
}
