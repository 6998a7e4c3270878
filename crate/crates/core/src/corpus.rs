//! Text ingestion: normalization, sentence handling, vocabulary and bigram counts.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;

use crate::error::{Error, Result};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const NUM: &str = "<num>";
pub const URL: &str = "<url>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const NUM_ID: u32 = 2;
pub const URL_ID: u32 = 3;

/// First line of a count file.
pub const COUNT_FILE_HEADER: &str = "#semsmooth-counts v1";

/// Bijective token <-> id map. Ids are dense and assigned in insertion order;
/// the four sentinels always occupy ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for s in [BOS, EOS, NUM, URL] {
            v.intern(s);
        }
        v
    }

    /// Id of `token`, inserting it if new.
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.ids.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Interns every token of every sentence.
    pub fn intern_sentences(&mut self, sentences: &[Vec<String>]) -> Vec<Vec<u32>> {
        sentences
            .iter()
            .map(|s| s.iter().map(|t| self.intern(t)).collect())
            .collect()
    }
}

fn reference_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[[^\]\n]*\]").unwrap())
}

fn sentence_end_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?]+(?:\s+|$)").unwrap())
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?[0-9]+(?:[.,][0-9]+)*$").unwrap())
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://")
        || token.starts_with("https://")
        || token.starts_with("www.")
        || token.contains("://")
}

/// Normalizes one whitespace-delimited raw token, pushing zero or more tokens.
fn normalize_token(raw: &str, out: &mut Vec<String>) {
    let trimmed = raw.trim_matches(|c: char| c.is_ascii_punctuation() && c != '<' && c != '>');
    match trimmed {
        BOS | EOS => return,
        NUM | URL => {
            out.push(trimmed.to_owned());
            return;
        }
        _ => {}
    }
    if is_url(raw) {
        out.push(URL.to_owned());
        return;
    }
    let trimmed = trimmed.trim_matches(|c: char| c.is_ascii_punctuation());
    if number_re().is_match(trimmed) {
        out.push(NUM.to_owned());
        return;
    }
    let cleaned: String = trimmed
        .chars()
        .filter(|c| c.is_ascii() && *c != '\'')
        .map(|c| if c.is_ascii_alphanumeric() { c } else { ' ' })
        .collect();
    for piece in cleaned.split_whitespace() {
        if piece.bytes().all(|b| b.is_ascii_digit()) {
            out.push(NUM.to_owned());
        } else {
            out.push(piece.to_owned());
        }
    }
}

/// Normalizes raw text into sentences wrapped in `<bos>` / `<eos>`.
///
/// Rules, in order: lowercase; drop bracketed reference markers; split into
/// sentences at line breaks and terminal punctuation; map URLs to `<url>` and
/// numbers to `<num>`; drop non-ASCII characters and apostrophes; treat other
/// punctuation as whitespace. Sentences left without tokens are dropped.
/// Existing sentinel tokens are understood, so the function is idempotent on
/// its own output.
pub fn preprocess(raw_text: &str) -> Vec<Vec<String>> {
    let lowered = raw_text.to_lowercase();
    let without_refs = reference_re().replace_all(&lowered, " ");
    let mut sentences = Vec::new();
    for line in without_refs.lines() {
        for chunk in sentence_end_re().split(line) {
            let mut tokens = vec![BOS.to_owned()];
            for raw in chunk.split_whitespace() {
                normalize_token(raw, &mut tokens);
            }
            if tokens.len() > 1 {
                tokens.push(EOS.to_owned());
                sentences.push(tokens);
            }
        }
    }
    sentences
}

/// Preprocesses bytes that may not be valid UTF-8. Invalid sequences are
/// dropped along with every other non-ASCII character.
pub fn preprocess_bytes(raw: &[u8]) -> Vec<Vec<String>> {
    preprocess(&String::from_utf8_lossy(raw))
}

/// Joins sentences back into text, one sentence per line.
pub fn join_sentences(sentences: &[Vec<String>]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a pre-tokenized stream: one sentence per line of space-separated
/// integer ids. Each sentence is wrapped with `<bos>` / `<eos>`; ids become
/// tokens named by their decimal value.
pub fn parse_id_sentences(text: &str) -> Result<Vec<Vec<String>>> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut tokens = vec![BOS.to_owned()];
        for field in line.split_whitespace() {
            let id: u64 = field.parse().map_err(|_| Error::Format {
                line: i + 1,
                message: format!("expected an integer token id, found {field:?}"),
            })?;
            tokens.push(id.to_string());
        }
        if tokens.len() > 1 {
            tokens.push(EOS.to_owned());
            sentences.push(tokens);
        }
    }
    Ok(sentences)
}

/// Successors of one context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextRow {
    /// `(word, count)` sorted by word, counts positive.
    pub successors: Vec<(u32, u64)>,
    pub total: u64,
}

impl ContextRow {
    pub fn count(&self, word: u32) -> u64 {
        self.successors
            .binary_search_by_key(&word, |(w, _)| *w)
            .map_or(0, |i| self.successors[i].1)
    }

    /// Number of distinct successors `N1+(c, .)`.
    pub fn distinct(&self) -> usize {
        self.successors.len()
    }
}

/// Sparse bigram counts over an alphabet of size `d`, stored context-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    d: usize,
    rows: Vec<ContextRow>,
    /// `N1+(., w)`: distinct predecessors of each word.
    predecessors: Vec<u64>,
    /// `N(., w)`: occurrences of each word as a successor.
    successor_totals: Vec<u64>,
    distinct_bigrams: u64,
    total: u64,
}

static EMPTY_ROW: ContextRow = ContextRow {
    successors: Vec::new(),
    total: 0,
};

impl CountTable {
    pub fn empty(d: usize) -> Self {
        Self::from_bigram_counts(d, std::iter::empty())
    }

    /// Builds a table from `((context, word), count)` entries. Repeated keys add.
    ///
    /// # Panics
    ///
    /// If an id falls outside `0..d`.
    pub fn from_bigram_counts<I>(d: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = ((u32, u32), u64)>,
    {
        let mut merged: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for ((c, w), n) in entries {
            assert!((c as usize) < d && (w as usize) < d, "token id out of range");
            if n > 0 {
                *merged.entry((c, w)).or_insert(0) += n;
            }
        }
        let mut rows = vec![ContextRow::default(); d];
        let mut predecessors = vec![0u64; d];
        let mut successor_totals = vec![0u64; d];
        let mut total = 0;
        let distinct_bigrams = merged.len() as u64;
        for ((c, w), n) in merged {
            let row = &mut rows[c as usize];
            row.successors.push((w, n));
            row.total += n;
            predecessors[w as usize] += 1;
            successor_totals[w as usize] += n;
            total += n;
        }
        Self {
            d,
            rows,
            predecessors,
            successor_totals,
            distinct_bigrams,
            total,
        }
    }

    /// Counts adjacent pairs within each sentence. Sentences are split across
    /// worker threads and the partial tables merged.
    pub fn from_sentences(sentences: &[Vec<u32>], d: usize) -> Self {
        let partial: HashMap<(u32, u32), u64> = sentences
            .par_chunks(4096)
            .map(|chunk| {
                let mut m: HashMap<(u32, u32), u64> = HashMap::new();
                for s in chunk {
                    for w in s.windows(2) {
                        *m.entry((w[0], w[1])).or_insert(0) += 1;
                    }
                }
                m
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                a
            });
        Self::from_bigram_counts(d, partial)
    }

    /// Counts adjacent pairs of a flat token stream.
    pub fn from_token_stream(tokens: &[u32], d: usize) -> Self {
        let mut m: HashMap<(u32, u32), u64> = HashMap::new();
        for w in tokens.windows(2) {
            *m.entry((w[0], w[1])).or_insert(0) += 1;
        }
        Self::from_bigram_counts(d, m)
    }

    /// Same counts over a larger alphabet.
    pub fn with_alphabet(&self, d: usize) -> Self {
        assert!(d >= self.d, "cannot shrink the alphabet");
        Self::from_bigram_counts(d, self.entries())
    }

    /// Entrywise sum of two tables over the larger alphabet.
    pub fn merged(&self, other: &CountTable) -> Self {
        Self::from_bigram_counts(self.d.max(other.d), self.entries().chain(other.entries()))
    }

    /// All `((context, word), count)` entries in context-major order.
    pub fn entries(&self) -> impl Iterator<Item = ((u32, u32), u64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(c, row)| {
            row.successors
                .iter()
                .map(move |&(w, n)| ((c as u32, w), n))
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.d
    }

    pub fn row(&self, context: u32) -> &ContextRow {
        self.rows.get(context as usize).unwrap_or(&EMPTY_ROW)
    }

    /// `N_{c,w}`.
    pub fn count(&self, context: u32, word: u32) -> u64 {
        self.row(context).count(word)
    }

    /// `N_c`.
    pub fn context_total(&self, context: u32) -> u64 {
        self.row(context).total
    }

    /// `N1+(c, .)`.
    pub fn distinct_successors(&self, context: u32) -> usize {
        self.row(context).distinct()
    }

    /// `N1+(., w)`.
    pub fn distinct_predecessors(&self, word: u32) -> u64 {
        self.predecessors.get(word as usize).copied().unwrap_or(0)
    }

    /// Occurrences of `word` as the second element of a bigram.
    pub fn successor_total(&self, word: u32) -> u64 {
        self.successor_totals.get(word as usize).copied().unwrap_or(0)
    }

    /// `N1+(., .)`.
    pub fn distinct_bigrams(&self) -> u64 {
        self.distinct_bigrams
    }

    /// Total bigram occurrences.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Contexts with at least one successor.
    pub fn observed_contexts(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.total > 0)
            .map(|(c, _)| c as u32)
    }

    /// Dense successor counts of `context` over the full alphabet.
    pub fn dense_row(&self, context: u32) -> Vec<u64> {
        let mut v = vec![0; self.d];
        for &(w, n) in &self.row(context).successors {
            v[w as usize] = n;
        }
        v
    }

    /// Writes the table as sorted TSV with the v1 header.
    pub fn save<W: Write>(&self, vocab: &Vocabulary, mut out: W) -> Result<()> {
        let mut lines: Vec<(&str, &str, u64)> = self
            .entries()
            .map(|((c, w), n)| {
                let ct = vocab.token(c).ok_or_else(|| {
                    Error::InvalidParameter(format!("context id {c} not in vocabulary"))
                })?;
                let wt = vocab.token(w).ok_or_else(|| {
                    Error::InvalidParameter(format!("word id {w} not in vocabulary"))
                })?;
                Ok((ct, wt, n))
            })
            .collect::<Result<_>>()?;
        lines.sort_unstable();
        writeln!(out, "{COUNT_FILE_HEADER}")?;
        for (c, w, n) in lines {
            writeln!(out, "{c}\t{w}\t{n}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a count file. Unknown tokens are added to `vocab`; the returned
    /// table spans the whole (possibly grown) vocabulary.
    pub fn load<R: BufRead>(input: R, vocab: &mut Vocabulary) -> Result<Self> {
        let mut entries = Vec::new();
        let mut previous: Option<(String, String)> = None;
        let mut saw_header = false;
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if i == 0 {
                if line != COUNT_FILE_HEADER {
                    return Err(Error::Format {
                        line: line_no,
                        message: format!("expected header {COUNT_FILE_HEADER:?}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let count: u64 = fields[2].parse().map_err(|_| Error::Format {
                line: line_no,
                message: format!("invalid count {:?}", fields[2]),
            })?;
            if count == 0 || fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::Format {
                    line: line_no,
                    message: "empty token or zero count".into(),
                });
            }
            let key = (fields[0].to_owned(), fields[1].to_owned());
            if previous.as_ref().is_some_and(|p| *p >= key) {
                return Err(Error::Format {
                    line: line_no,
                    message: "entries are not strictly sorted".into(),
                });
            }
            let c = vocab.intern(&key.0);
            let w = vocab.intern(&key.1);
            entries.push(((c, w), count));
            previous = Some(key);
        }
        if !saw_header {
            return Err(Error::Format {
                line: 1,
                message: "missing header".into(),
            });
        }
        Ok(Self::from_bigram_counts(vocab.len(), entries))
    }
}
