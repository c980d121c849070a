//! Batch command-line pipeline: fixture generation, alignment, baseline
//! generators, generator training and decoding, corpus assembly, language
//! modelling and evaluation.
//!
//! Every tunable can come from a flag, a flat `key=value` config file
//! (`--config`), or the built-in default, in that order of precedence.
//! Each run appends one JSON line to `<out>/manifest.jsonl` recording the
//! resolved settings and the SHA-256 of every input and output.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, Resolver};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PARSE: u8 = 4;
pub const EXIT_CHECKPOINT: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(EXIT_PARSE, message)
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self::new(EXIT_OTHER, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<crate::corpus::CorpusError> for CliError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        use crate::corpus::CorpusError;
        match e {
            CorpusError::Io { .. } => Self::io(e.to_string()),
            _ => Self::parse(e.to_string()),
        }
    }
}

impl From<crate::align::AlignError> for CliError {
    fn from(e: crate::align::AlignError) -> Self {
        use crate::align::AlignError;
        match e {
            AlignError::Io { .. } => Self::io(e.to_string()),
            AlignError::Parse { .. } => Self::parse(e.to_string()),
            _ => Self::other(e.to_string()),
        }
    }
}

impl From<crate::tensor::CheckpointError> for CliError {
    fn from(e: crate::tensor::CheckpointError) -> Self {
        use crate::tensor::CheckpointError;
        match e {
            CheckpointError::Io(_) => Self::io(e.to_string()),
            CheckpointError::UnsupportedVersion { .. } => Self::new(EXIT_CHECKPOINT, e.to_string()),
            CheckpointError::BadMagic(_) | CheckpointError::Malformed(_) => Self::parse(e.to_string()),
        }
    }
}

impl From<crate::lm::LmError> for CliError {
    fn from(e: crate::lm::LmError) -> Self {
        use crate::lm::LmError;
        match e {
            LmError::LengthMismatch { .. } => Self::parse(e.to_string()),
            _ => Self::other(e.to_string()),
        }
    }
}

impl From<crate::seq2seq::TrainError> for CliError {
    fn from(e: crate::seq2seq::TrainError) -> Self {
        use crate::seq2seq::TrainError;
        match e {
            TrainError::MissingTarget { .. } => Self::parse(e.to_string()),
            _ => Self::other(e.to_string()),
        }
    }
}

impl From<crate::seq2seq::BeamError> for CliError {
    fn from(e: crate::seq2seq::BeamError) -> Self {
        Self::other(e.to_string())
    }
}

impl From<crate::tensor::TensorError> for CliError {
    fn from(e: crate::tensor::TensorError) -> Self {
        Self::other(e.to_string())
    }
}

impl From<crate::eval::EvalError> for CliError {
    fn from(e: crate::eval::EvalError) -> Self {
        Self::parse(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "csforge", version, about = "Code-switched sentence generation and language-model augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key=value` file; keys are long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for all randomness in this run.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic bilingual fixture split into train/dev/test.
    FixtureGen(FixtureGenArgs),
    /// Train bidirectional word aligners and write symmetrized links.
    Align(AlignArgs),
    /// Equivalence-constraint baseline generator.
    EcGenerate(EcGenerateArgs),
    /// Unconstrained random-substitution baseline generator.
    RandomGenerate(RandomGenerateArgs),
    /// Train the seq2seq generator.
    TrainGen(TrainGenArgs),
    /// Beam-decode N-best code-switched sentences.
    DecodeNbest(DecodeNbestArgs),
    /// Concatenate real utterances with generated hypotheses.
    Assemble(AssembleArgs),
    /// Train a recurrent language model.
    TrainLm(TrainLmArgs),
    /// Perplexity of one or more language models on a test file.
    EvalPpl(EvalPplArgs),
    /// Corpus BLEU of hypotheses against references.
    EvalBleu(EvalBleuArgs),
    /// Code-switching statistics and n-gram histograms.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct FixtureGenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Total number of sentence pairs [default: 2000].
    #[arg(long)]
    pub size: Option<usize>,
    /// Pairs held out for dev [default: size/10].
    #[arg(long)]
    pub dev: Option<usize>,
    /// Pairs held out for test [default: size/10].
    #[arg(long)]
    pub test: Option<usize>,
    /// Multiplier on constituent switch probabilities [default: 1].
    #[arg(long)]
    pub switch_scale: Option<f64>,
    #[arg(long)]
    pub nouns: Option<usize>,
    #[arg(long)]
    pub verbs: Option<usize>,
    #[arg(long)]
    pub adjectives: Option<usize>,
    #[arg(long)]
    pub adverbs: Option<usize>,
    /// Zipf exponent of word choice [default: 1.1].
    #[arg(long)]
    pub zipf: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub common: Common,
    /// Parallel TSV (`l1<TAB>l2[<TAB>cs]`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `ibm1` or `diagonal` [default: diagonal].
    #[arg(long)]
    pub model: Option<String>,
    /// EM iterations [default: 5].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// `intersection` or `union` [default: intersection].
    #[arg(long)]
    pub symmetrize: Option<String>,
    /// Comma-separated λ values for the diagonal prior [default: 2,4,6,8].
    #[arg(long)]
    pub lambda_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct EcGenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Pharaoh alignments, one line per pair.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// Candidate cap per pair [default: 16].
    #[arg(long)]
    pub max_outputs: Option<usize>,
    /// Sample at most this many candidates per pair.
    #[arg(long)]
    pub quota: Option<usize>,
    /// Segmentation frame: `l1` or `l2` [default: l1].
    #[arg(long)]
    pub frame: Option<String>,
}

#[derive(Debug, Args)]
pub struct RandomGenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// Draws per pair before deduplication [default: 3].
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainGenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Parallel TSV with the code-switched column.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// `pointer-generator` or `attention` [default: pointer-generator].
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub vocab_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecodeNbestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding `generator.csfg` and `generator.vocab`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Beam size [default: 5].
    #[arg(long)]
    pub beam: Option<usize>,
    /// Hypotheses kept per input [default: 3].
    #[arg(long)]
    pub nbest: Option<usize>,
    /// Output length cap [default: 1.5 × source length].
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Output file stem [default: pg].
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Real utterances, one per line.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// `METHOD=PATH` N-best file; repeatable.
    #[arg(long)]
    pub generated: Vec<String>,
    /// `1best` or `3best` [default: 3best].
    #[arg(long)]
    pub policy: Option<String>,
    /// Take what an example has instead of failing on missing ranks.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub allow_short: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training utterances, one per line.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// POS sidecar for `--train`; enables the syntax channel.
    #[arg(long)]
    pub train_pos: Option<PathBuf>,
    #[arg(long)]
    pub dev_pos: Option<PathBuf>,
    /// Extra corpus whose words join the vocabulary; repeatable.
    #[arg(long)]
    pub vocab_corpus: Vec<PathBuf>,
    #[arg(long)]
    pub vocab_cap: Option<usize>,
    /// `lstm` or `simple-rnn` [default: lstm].
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub pos_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub bptt: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated initial rates, chosen by dev perplexity [default: 10,20].
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalPplArgs {
    #[command(flatten)]
    pub common: Common,
    /// `NAME=DIR` (or `DIR`) holding `lm.csfg` and `lm.vocab`; repeatable.
    #[arg(long)]
    pub model: Vec<String>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// POS sidecar for models with a syntax channel.
    #[arg(long)]
    pub test_pos: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalBleuArgs {
    #[command(flatten)]
    pub common: Common,
    /// Hypotheses, one per line.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// References, one per line.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,
    /// `NAME=PATH` (or `PATH`) corpus; repeatable.
    #[arg(long)]
    pub corpus: Vec<String>,
    /// Highest n-gram order written, 1..=4 [default: 4].
    #[arg(long)]
    pub max_n: Option<usize>,
}

/// Parses `args` and runs the selected subcommand.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

pub fn main() -> ExitCode {
    run_from(std::env::args_os())
}
