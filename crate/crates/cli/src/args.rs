use std::net::SocketAddr;
use std::path::PathBuf;

use chainhash_net::ApiStyle;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chainhash", version, about = "Chain-hash fingerprints for language models")]
pub struct Cli {
    /// Report style on stdout.
    #[arg(long, value_enum, global = true, default_value_t = OutputFormat::Human)]
    pub format: OutputFormat,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Jsonl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create or check chain files.
    #[command(subcommand)]
    Chain(ChainCmd),
    /// Build fine-tuning data.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Query a suspect model.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Settle competing claims.
    #[command(subcommand)]
    Ownership(OwnershipCmd),
    /// Trial-count calculations.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Run a simulated model server.
    #[command(subcommand)]
    Simulate(SimulateCmd),
}

#[derive(Debug, Subcommand)]
pub enum ChainCmd {
    New(Box<ChainNewArgs>),
    Check(ChainCheckArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["questions", "random", "natural"]))]
pub struct ChainNewArgs {
    /// One question per line.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Generate this many random-token questions from --vocab.
    #[arg(long, requires = "vocab")]
    pub random: Option<usize>,
    /// Sample this many questions from the --pool file.
    #[arg(long, requires = "pool")]
    pub natural: Option<usize>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, default_value_t = chainhash_core::questions::DEFAULT_TOKENS_PER_QUESTION)]
    pub tokens_per_question: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// 256 response lines.
    #[arg(long)]
    pub table: PathBuf,
    /// File whose bytes are the secret key.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    #[arg(long)]
    pub chain_id: Option<String>,
    /// Split the questions into this many chains (--out is then a directory).
    #[arg(long, default_value_t = 1, conflicts_with = "instances")]
    pub num_chains: usize,
    /// Build collusion-resistant chains for this many model instances.
    #[arg(long, requires = "collusion_bound")]
    pub instances: Option<usize>,
    /// Largest coalition that must still share a chain.
    #[arg(long, requires = "instances")]
    pub collusion_bound: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChainCheckArgs {
    pub chain: PathBuf,
    #[arg(long)]
    pub key_file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    Build(DatasetBuildArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Instruct,
    Base,
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    /// Padding vocabulary, one token per line.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Instruct)]
    pub mode: ModeArg,
    #[arg(long)]
    pub meta_prompts: Option<PathBuf>,
    /// Instruct mode without training meta prompts.
    #[arg(long)]
    pub allow_empty_meta: bool,
    /// Built-in prompt template for base mode (repeatable).
    #[arg(long = "prompt-format")]
    pub prompt_formats: Vec<String>,
    /// JSON lines of `{"id","template"}` for base mode.
    #[arg(long)]
    pub prompt_format_file: Option<PathBuf>,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub near_miss: usize,
    #[arg(long, default_value_t = 1)]
    pub near_miss_edits: usize,
    #[arg(long, default_value_t = chainhash_core::dataset::DEFAULT_REPETITIONS)]
    pub repetitions: usize,
    #[arg(long, default_value_t = chainhash_core::dataset::DEFAULT_PAD_MIN)]
    pub pad_min: usize,
    #[arg(long, default_value_t = chainhash_core::dataset::DEFAULT_PAD_MAX)]
    pub pad_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCmd {
    Run(VerifyRunArgs),
}

#[derive(Debug, Args, Clone)]
pub struct EndpointArgs {
    /// Base URL, or an endpoint name from --config.
    #[arg(long)]
    pub endpoint: String,
    /// TOML file with `[endpoints.<name>]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub api: Option<ApiStyle>,
    #[arg(long)]
    pub model: Option<String>,
    /// Render this prompt template client-side and use the completions route.
    #[arg(long)]
    pub grey_box: Option<String>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct VerifyRunArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    #[arg(long)]
    pub meta_prompts: Option<PathBuf>,
    #[arg(long, default_value_t = chainhash_net::verifier::DEFAULT_MAX_TRIALS)]
    pub max_trials: u64,
    /// Ask for token log-probabilities.
    #[arg(long)]
    pub logprobs: bool,
    /// Write every query and reply as JSON lines.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Exit 4 unless the verdict is owned.
    #[arg(long)]
    pub assert_owned: bool,
}

#[derive(Debug, Subcommand)]
pub enum OwnershipCmd {
    Resolve(OwnershipResolveArgs),
}

#[derive(Debug, Args)]
pub struct OwnershipResolveArgs {
    /// JSON file listing claims, models and lineage.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = chainhash_net::verifier::DEFAULT_MAX_TRIALS)]
    pub max_trials: u64,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCmd {
    Trials(MetricsTrialsArgs),
}

#[derive(Debug, Args)]
pub struct MetricsTrialsArgs {
    /// Comma-separated per-question success probabilities.
    #[arg(long, allow_hyphen_values = true)]
    pub probs: String,
    #[arg(long, default_value_t = chainhash_core::metrics::DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    #[arg(long, default_value_t = chainhash_core::metrics::REMOVAL_CAP)]
    pub cap: u64,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCmd {
    Serve(SimulateServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateServeArgs {
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Multiply every success probability by this factor.
    #[arg(long)]
    pub degrade: Option<f64>,
}
