use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use semsmooth::risk::{rows_to_csv, run_suite, Suite, SuiteConfig};
use semsmooth::semantic::{ProxyAlphabet, WeightRule};
use semsmooth::synthetic::{run_sweep, MarkovSpec, SweepConfig};

use crate::eval::{PhiArg, ProxyAlphabetArg};
use crate::manifest::RunManifest;
use crate::{write_file, BoundFailure};

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub states: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Embedding dimension (default: numerical rank of the log matrix).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1000,3000,10000,30000,100000")]
    pub ntrain_grid: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub ntest: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,5,10")]
    pub m_grid: Vec<usize>,
    /// Add-constant of the base model.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = PhiArg::Softmin)]
    pub phi: PhiArg,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = ProxyAlphabetArg::Full)]
    pub proxy_alphabet: ProxyAlphabetArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON manifest path.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs, seed: u64, threads: Option<usize>) -> anyhow::Result<()> {
    let cfg = SweepConfig {
        spec: MarkovSpec {
            states: args.states,
            classes: args.classes,
            dim: args.dim,
            seed,
        },
        n_train_grid: args.ntrain_grid.clone(),
        n_test: args.ntest,
        reps: args.reps,
        m_grid: args.m_grid.clone(),
        beta: args.beta,
        rule: match args.phi {
            PhiArg::Recip => WeightRule::reciprocal(),
            PhiArg::Softmin => WeightRule::softmin(args.tau),
        },
        proxy_alphabet: match args.proxy_alphabet {
            ProxyAlphabetArg::Estimated => ProxyAlphabet::Estimated,
            ProxyAlphabetArg::Full => ProxyAlphabet::Full,
        },
        seed,
        ..SweepConfig::default()
    };
    let result = run_sweep(&cfg).map_err(|e| match e {
        semsmooth::Error::RankOverflow { needed, requested } => anyhow::anyhow!(
            "--dim {requested} is below the numerical rank {needed} of the log-transition \
             matrix; pass --dim {needed} or larger, or omit --dim"
        ),
        other => other.into(),
    })?;
    write_file(&args.out, &result.to_csv())?;
    if let Some(path) = &args.manifest {
        let manifest = RunManifest::new("synth", seed, threads, &cfg);
        write_file(path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    }
    eprintln!(
        "rank {}, lipschitz {:.4}, entropy-bound perplexity {:.4}",
        result.rank, result.lipschitz, result.entropy_bound_ppl
    );
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RiskArgs {
    /// thm3, thm4, thm6 or assouad.
    #[arg(long)]
    pub suite: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2_000)]
    pub trials: usize,
    /// KL-ball samples per cell.
    #[arg(long, default_value_t = 3)]
    pub draws: usize,
    /// Sign vectors per alphabet in the assouad suite.
    #[arg(long, default_value_t = 1_000)]
    pub members: usize,
}

pub fn risk(args: &RiskArgs, seed: u64, _threads: Option<usize>) -> anyhow::Result<()> {
    let suite: Suite = args.suite.parse()?;
    let cfg = SuiteConfig {
        trials: args.trials,
        draws: args.draws,
        members: args.members,
        seed,
    };
    let rows = run_suite(suite, &cfg).with_context(|| format!("suite {}", args.suite))?;
    write_file(&args.out, &rows_to_csv(&rows))?;
    let failed: Vec<_> = rows.iter().filter(|r| r.violated).collect();
    for r in &failed {
        eprintln!("violated: {}", r.to_csv());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(BoundFailure(failed.len()).into())
    }
}
