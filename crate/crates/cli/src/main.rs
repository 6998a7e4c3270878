use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod eval;
mod manifest;
mod run;

/// Semantic smoothing experiments for bigram language models.
#[derive(Debug, Parser)]
#[command(name = "semsmooth", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize raw text into one sentence per line.
    Preprocess(PreprocessArgs),
    /// Train a bigram model and report test perplexity.
    Eval(eval::EvalArgs),
    /// Perplexity versus training size on the synthetic Markov chain.
    Synth(run::SynthArgs),
    /// Monte Carlo risk bound checks.
    Risk(run::RiskArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Raw or preprocessed text.
    Words,
    /// One sentence per line of integer token ids.
    Ids,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = InputMode::Words)]
    mode: InputMode,
}

/// Raised when a bound check fails; maps to its own exit code.
#[derive(Debug)]
pub struct BoundFailure(pub usize);

impl std::fmt::Display for BoundFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} bound check(s) failed", self.0)
    }
}

impl std::error::Error for BoundFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<BoundFailure>().is_some() {
        return 3;
    }
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if let Some(semsmooth::Error::Io(_)) = cause.downcast_ref::<semsmooth::Error>() {
            return 4;
        }
    }
    2
}

pub fn read_sentences(path: &std::path::Path, mode: InputMode) -> anyhow::Result<Vec<Vec<String>>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match mode {
        InputMode::Words => semsmooth::corpus::preprocess_bytes(&bytes),
        InputMode::Ids => semsmooth::corpus::parse_id_sentences(&String::from_utf8_lossy(&bytes))
            .with_context(|| format!("parsing {}", path.display()))?,
    })
}

pub fn write_file(path: &std::path::Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn preprocess(args: &PreprocessArgs) -> anyhow::Result<()> {
    let sentences = read_sentences(&args.input, args.mode)?;
    write_file(&args.out, &semsmooth::corpus::join_sentences(&sentences))
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Eval(a) => eval::run(a, cli.seed, cli.threads),
        Command::Synth(a) => run::synth(a, cli.seed, cli.threads),
        Command::Risk(a) => run::risk(a, cli.seed, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
