//! `attnkw`: synthesize corpora, train attention classifiers, extract
//! keywords and render reports.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use attnkw::keywords::{GroupBy, DEFAULT_PERCENTILE, DEFAULT_TOP_WORDS};
use attnkw::models::VariantKind;
use attnkw::training::{OptimizerKind, TrainConfig, VocabConfig};
use attnkw::{Error, ErrorKind};
use clap::{Args, Parser, Subcommand};

use config::{EmbeddingMethod, SplitChoice};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "ATTNKW_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "attnkw",
    version,
    about = "Attention-based text classification and keyword extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic marker corpus as JSONL.
    Synth(SynthArgs),
    /// Train one model variant; writes model.ckpt, vocab.txt, metrics.json and runconfig.json.
    Train(TrainArgs),
    /// Extract keywords with a trained model; writes keywords.json, categories.json and report.html.
    Extract(ExtractArgs),
    /// Write a contextual-embedding file for pt-att-bilstm.
    Embeddings(EmbeddingsArgs),
    /// Re-run a train or extract command from its runconfig.json.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Copy)]
#[group(required = true, multiple = false)]
pub struct SeedArgs {
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw a fresh seed; it is recorded in the outputs.
    #[arg(long)]
    pub random: bool,
}

impl SeedArgs {
    pub fn resolve(self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let seed = rand::random::<u64>();
            log::info!("using random seed {seed}");
            seed
        })
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of classes (at least 2).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub classes: u64,
    /// Documents per class (at least 4).
    #[arg(long, value_parser = clap::value_parser!(u64).range(4..))]
    pub per_class: u64,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Corpus preparation shared by `train` and `embeddings`.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// JSONL corpus with "id", "text" and "label" fields.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Fraction of documents in the training side.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Documents with this many whitespace words or more are dropped.
    #[arg(long, default_value_t = attnkw::corpus::DEFAULT_MAX_WORDS)]
    pub max_words: usize,
    /// Target vocabulary size.
    #[arg(long, default_value_t = VocabConfig::default().target_size)]
    pub vocab_size: usize,
    /// Minimum frequency for vocabulary entries and merges.
    #[arg(long, default_value_t = VocabConfig::default().min_freq)]
    pub min_freq: usize,
}

fn train_defaults() -> TrainConfig {
    TrainConfig::new(VariantKind::OeAttBilstm, 0)
}

fn parse_variant(s: &str) -> Result<VariantKind, String> {
    s.parse().map_err(|e: Error| match e {
        Error::InvalidArgument(msg) => msg,
        other => other.to_string(),
    })
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!(
            "unknown optimizer {s:?}; valid optimizers are adam, sgd"
        )),
    }
}

fn parse_group_by(s: &str) -> Result<GroupBy, String> {
    match s {
        "true" => Ok(GroupBy::True),
        "predicted" => Ok(GroupBy::Predicted),
        _ => Err(format!("unknown grouping {s:?}; use true or predicted")),
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model variant: ft-att, pt-att-bilstm or oe-att-bilstm.
    #[arg(long, value_parser = parse_variant)]
    pub variant: VariantKind,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Contextual-embedding file (required for pt-att-bilstm).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = train_defaults().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = train_defaults().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = train_defaults().learning_rate)]
    pub learning_rate: f64,
    /// adam or sgd.
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    pub optimizer: OptimizerKind,
    /// Epochs without a better test accuracy before stopping.
    #[arg(long, default_value_t = train_defaults().patience)]
    pub patience: usize,
    /// Decoupled weight decay.
    #[arg(long, default_value_t = train_defaults().weight_decay)]
    pub weight_decay: f64,
    /// Keep the last epoch's parameters instead of the best-scoring ones.
    #[arg(long)]
    pub keep_last: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary file; defaults to vocab.txt next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Percentile of the distances to the largest weight used as threshold.
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    pub n: f64,
    /// Stopword file, one word per line; defaults to the bundled English list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Words per category table.
    #[arg(long, default_value_t = DEFAULT_TOP_WORDS)]
    pub top: usize,
    /// Count keywords under the true or the predicted category.
    #[arg(long, default_value = "true", value_parser = parse_group_by)]
    pub group_by: GroupBy,
    /// Documents to extract from.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Number of highlighted documents in the report.
    #[arg(long, default_value_t = 20)]
    pub highlight: usize,
    /// Also print the highlighted documents to the terminal.
    #[arg(long)]
    pub ansi: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbeddingsArgs {
    #[arg(long, value_enum, default_value_t = EmbeddingMethod::Cooccurrence)]
    pub method: EmbeddingMethod,
    /// Corpus options (cooccurrence and random methods).
    #[arg(long, required_unless_present = "checkpoint")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = attnkw::corpus::DEFAULT_MAX_WORDS)]
    pub max_words: usize,
    #[arg(long, default_value_t = VocabConfig::default().target_size)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = VocabConfig::default().min_freq)]
    pub min_freq: usize,
    /// Split and vector seed; use the training seed so the vocabularies agree.
    #[arg(long, conflicts_with = "random")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub random: bool,
    /// Vector width.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// ft-att checkpoint to export (checkpoint method).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary of the checkpoint; defaults to vocab.txt next to it.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub runconfig: PathBuf,
    /// Output directory for the replayed run.
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    attnkw::exec::init_threads(threads);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Embeddings(a) => commands::embeddings(&a),
        Command::Replay(a) => commands::replay(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
