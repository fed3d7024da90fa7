//! `alloygen` command-line pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "alloygen", version, about = "BCC/B2 superalloy candidate generation, scoring and preference tuning")]
struct Cli {
    /// Flat TOML run configuration.
    #[arg(long, global = true, env = "ALLOYGEN_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prints the resolved configuration and exits.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate BCC and B2 pools and keep single-phase compositions.
    GenPools(GenPoolsArgs),
    /// Build the SFT corpus from a pool file.
    GenSft(GenSftArgs),
    /// Train the policy on an SFT corpus.
    TrainSft(TrainSftArgs),
    /// Sample parseable triples from a policy checkpoint.
    Sample(SampleArgs),
    /// Score triples with the configured phase oracle.
    Score(ScoreArgs),
    /// Build DPO preference pairs from scored candidates.
    BuildDpo(BuildDpoArgs),
    /// Preference-tune a policy against its own frozen copy.
    TrainDpo(TrainDpoArgs),
    /// Compute the metric report for a sample set.
    Eval(EvalArgs),
    /// Generate random-search baseline triples.
    Baseline(BaselineArgs),
    /// Compare two scored sample sets.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct GenPoolsArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep every enumerated composition.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct GenSftArgs {
    #[arg(long)]
    pub pools: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep a seeded subset of this many examples, in corpus order.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainSftArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scoring threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildDpoArgs {
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub top_frac: Option<f64>,
    #[arg(long)]
    pub rejected_per_chosen: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainDpoArgs {
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Scored version of the samples, for the mean reward.
    #[arg(long)]
    pub scored: Option<PathBuf>,
    /// Pool file whose BCC x B2 pairs form the reference design space.
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Known-alloy formulas (CSV with a `formula` column); the pool
    /// compositions when omitted.
    #[arg(long)]
    pub known: Option<PathBuf>,
    /// Seeded cap on the number of reference pairs.
    #[arg(long, default_value_t = 5000)]
    pub reference_limit: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Scored reference set (e.g. SFT samples).
    #[arg(long)]
    pub before: PathBuf,
    /// Scored comparison set (e.g. DPO samples).
    #[arg(long)]
    pub after: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Comma-separated element set for the subset statistic.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, default_value = "both")]
    pub which: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0:#}")]
    Config(anyhow::Error),
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error("{stage} failed: {source:#}")]
    Stage { stage: &'static str, source: anyhow::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Stage { .. } => 1,
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref()).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.show_config {
        print!("{}", cfg.to_toml().map_err(CliError::Config)?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Config(anyhow::anyhow!("no subcommand given; see --help")));
    };
    match command {
        Command::GenPools(a) => commands::gen_pools(&cfg, a),
        Command::GenSft(a) => commands::gen_sft(&cfg, a),
        Command::TrainSft(a) => commands::train_sft(&cfg, a),
        Command::Sample(a) => commands::sample(&cfg, a),
        Command::Score(a) => commands::score(&cfg, a),
        Command::BuildDpo(a) => commands::build_dpo(&cfg, a),
        Command::TrainDpo(a) => commands::train_dpo(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Baseline(a) => commands::baseline(&cfg, a),
        Command::Analyze(a) => commands::analyze(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
