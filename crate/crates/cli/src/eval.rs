use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use semsmooth::corpus::{CountTable, Vocabulary};
use semsmooth::embeddings::{
    ContextEmbeddings, EmbeddingFormat, EmbeddingTable, Norm, ProximityConfig, SupportEstimator,
    SynonymIndex,
};
use semsmooth::estimators::{BigramModel, SmootherConfig};
use semsmooth::prob::{decompose, TestSequence};
use semsmooth::semantic::{build_synonym_sets, ProxyAlphabet, SemanticConfig, SemanticModel, WeightRule};

use crate::manifest::RunManifest;
use crate::{read_sentences, write_file, InputMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AddBeta,
    Kn,
    Jm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiArg {
    Recip,
    Softmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportArg {
    Chao1,
    Distinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyAlphabetArg {
    Estimated,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbFormatArg {
    Glove,
    Word2vec,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value_t = InputMode::Words)]
    pub mode: InputMode,
    #[arg(long, value_enum, default_value_t = ModelKind::Kn)]
    pub model: ModelKind,
    /// Add-constant of the add-beta model.
    #[arg(long, default_value_t = 0.003)]
    pub beta: f64,
    /// Kneser-Ney absolute discount.
    #[arg(long, default_value_t = 0.6)]
    pub discount: f64,
    /// Jelinek-Mercer weight on the bigram estimate.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EmbFormatArg::Glove)]
    pub emb_format: EmbFormatArg,
    /// Number of synonyms per context (0 disables smoothing).
    #[arg(long, default_value_t = 0)]
    pub synonyms: usize,
    /// Lipschitz constant in the proximity estimate.
    #[arg(long = "L", default_value_t = 5.0)]
    pub lipschitz: f64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = NormArg::L1)]
    pub norm: NormArg,
    #[arg(long, value_enum, default_value_t = PhiArg::Recip)]
    pub phi: PhiArg,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Add-constant in synonym scores and loss proxies.
    #[arg(long, default_value_t = 0.005)]
    pub syn_beta: f64,
    #[arg(long, value_enum, default_value_t = SupportArg::Chao1)]
    pub support: SupportArg,
    #[arg(long, value_enum, default_value_t = ProxyAlphabetArg::Estimated)]
    pub proxy_alphabet: ProxyAlphabetArg,
    /// JSON report path (stdout if omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Comma-separated synonym counts; emits one CSV row per value.
    #[arg(long, value_delimiter = ',')]
    pub sweep_m: Option<Vec<usize>>,
    /// CSV path for --sweep-m (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParams {
    pub args: EvalArgs,
    pub smoother: SmootherConfig,
    pub proximity: ProximityConfig,
    pub semantic: SemanticConfig,
    pub support: SupportEstimator,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub ppl: f64,
    pub log_ppl: f64,
    pub entropy_term: f64,
    pub kl_term: f64,
    /// Test contexts that could not be smoothed (no embedding or no synonyms).
    pub skipped_contexts: usize,
    pub vocabulary: usize,
    pub test_tokens: usize,
    pub manifest: RunManifest<ResolvedParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub m: usize,
    pub ppl: f64,
    pub log_ppl: f64,
    pub entropy_term: f64,
    pub kl_term: f64,
    pub skipped_contexts: usize,
}

impl Scores {
    pub const CSV_HEADER: &'static str = "m,ppl,log_ppl,entropy_term,kl_term,skipped_contexts";

    fn to_csv(&self) -> String {
        format!(
            "{},{:.9},{:.12},{:.12},{:.12},{}",
            self.m, self.ppl, self.log_ppl, self.entropy_term, self.kl_term, self.skipped_contexts
        )
    }
}

pub fn resolve(args: &EvalArgs) -> anyhow::Result<ResolvedParams> {
    let smoother = match args.model {
        ModelKind::AddBeta => SmootherConfig::AddBeta { beta: args.beta },
        ModelKind::Kn => SmootherConfig::KneserNey { discount: args.discount },
        ModelKind::Jm => SmootherConfig::JelinekMercer { lambda: args.lambda },
    };
    smoother.validate()?;
    let proximity = ProximityConfig {
        lipschitz: args.lipschitz,
        norm: match args.norm {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        },
        epsilon: args.epsilon,
    };
    proximity.validate()?;
    let rule = match args.phi {
        PhiArg::Recip => WeightRule::reciprocal(),
        PhiArg::Softmin => WeightRule::softmin(args.tau),
    };
    rule.validate()?;
    let semantic = SemanticConfig {
        m: args.synonyms,
        rule,
        beta: args.syn_beta,
        proxy_alphabet: match args.proxy_alphabet {
            ProxyAlphabetArg::Estimated => ProxyAlphabet::Estimated,
            ProxyAlphabetArg::Full => ProxyAlphabet::Full,
        },
    };
    let support = match args.support {
        SupportArg::Chao1 => SupportEstimator::Chao1,
        SupportArg::Distinct => SupportEstimator::Distinct,
    };
    Ok(ResolvedParams {
        args: args.clone(),
        smoother,
        proximity,
        semantic,
        support,
    })
}

/// Training counts, test sequence and embeddings over a shared vocabulary.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub base: BigramModel,
    pub test: TestSequence,
    pub embeddings: Option<ContextEmbeddings>,
}

pub fn prepare(params: &ResolvedParams, need_embeddings: bool) -> anyhow::Result<Prepared> {
    let args = &params.args;
    let train = read_sentences(&args.train, args.mode)?;
    let test = read_sentences(&args.test, args.mode)?;
    if train.is_empty() {
        bail!("training file {} has no sentences", args.train.display());
    }
    // Closed vocabulary: test words are part of the alphabet, so every
    // smoothed model gives them positive probability.
    let mut vocab = Vocabulary::new();
    let train_ids = vocab.intern_sentences(&train);
    let test_ids = vocab.intern_sentences(&test);
    let counts = CountTable::from_sentences(&train_ids, vocab.len());
    let base = BigramModel::new(counts, params.smoother.clone())?;
    let test = TestSequence::from_sentences(&test_ids)
        .with_context(|| format!("test file {} has no bigrams", args.test.display()))?;
    let embeddings = if need_embeddings {
        let Some(path) = &args.embeddings else {
            bail!("--embeddings is required when --synonyms or --sweep-m uses m > 0");
        };
        let format = match args.emb_format {
            EmbFormatArg::Glove => EmbeddingFormat::GloveText,
            EmbFormatArg::Word2vec => EmbeddingFormat::Word2VecText,
        };
        let table = EmbeddingTable::load(path, format)
            .with_context(|| format!("loading embeddings {}", path.display()))?;
        Some(table.align(&vocab))
    } else {
        None
    };
    Ok(Prepared {
        vocab,
        base,
        test,
        embeddings,
    })
}

/// Scores the base model smoothed with `m` synonyms per test context.
pub fn score(prepared: &Prepared, params: &ResolvedParams, m: usize) -> anyhow::Result<Scores> {
    let (report, skipped) = if m == 0 {
        (decompose(&prepared.base, &prepared.test)?, 0)
    } else {
        let embeddings = prepared
            .embeddings
            .as_ref()
            .context("embeddings are required for m > 0")?;
        let index = SynonymIndex::new(
            embeddings,
            prepared.base.counts(),
            params.support,
            params.proximity,
            params.semantic.beta,
        )?;
        let contexts: Vec<u32> = prepared
            .test
            .events()
            .iter()
            .map(|&(c, _)| c)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cfg = SemanticConfig { m, ..params.semantic };
        let sets = build_synonym_sets(&index, &contexts, &cfg)?;
        let skipped = sets.iter().filter(|s| s.synonyms.is_empty()).count();
        let model = SemanticModel::new(&prepared.base, &sets);
        (decompose(&model, &prepared.test)?, skipped)
    };
    Ok(Scores {
        m,
        ppl: report.perplexity(),
        log_ppl: report.log_ppl,
        entropy_term: report.entropy_term,
        kl_term: report.kl_term,
        skipped_contexts: skipped,
    })
}

pub fn run(args: &EvalArgs, seed: u64, threads: Option<usize>) -> anyhow::Result<()> {
    let params = resolve(args)?;
    let max_m = args
        .sweep_m
        .as_ref()
        .and_then(|ms| ms.iter().copied().max())
        .unwrap_or(0)
        .max(args.synonyms);
    let prepared = prepare(&params, max_m > 0)?;

    if let Some(ms) = &args.sweep_m {
        let mut csv = String::from(Scores::CSV_HEADER);
        csv.push('\n');
        for &m in ms {
            csv.push_str(&score(&prepared, &params, m)?.to_csv());
            csv.push('\n');
        }
        match &args.out {
            Some(path) => write_file(path, &csv)?,
            None => print!("{csv}"),
        }
    }

    let s = score(&prepared, &params, args.synonyms)?;
    let report = EvalReport {
        ppl: s.ppl,
        log_ppl: s.log_ppl,
        entropy_term: s.entropy_term,
        kl_term: s.kl_term,
        skipped_contexts: s.skipped_contexts,
        vocabulary: prepared.vocab.len(),
        test_tokens: prepared.test.len(),
        manifest: RunManifest::new("eval", seed, threads, params),
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.report {
        Some(path) => write_file(path, &json),
        None if args.sweep_m.is_some() && args.out.is_none() => Ok(()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}
