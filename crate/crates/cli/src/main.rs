//! `dialsum`: data preparation, post-training, fine-tuning and evaluation
//! for dialogue summarization.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{data, report, train};
use config::ExperimentConfig;

/// Bad invocation: unknown values, missing inputs, invalid configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "dialsum",
    version,
    about = "Dialogue summarization with pseudo-paraphrase post-training"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for run artifacts and manifests.
    #[arg(long, global = true, default_value = "runs")]
    run_dir: PathBuf,
    /// Upper bound on worker threads and annotator processes.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Annotation backend: `external` (needs DIALSUM_ANNOTATOR_CMD) or `fallback`.
    #[arg(long, global = true)]
    annotator: Option<String>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a raw corpus split to canonical JSONL.
    Convert(data::ConvertArgs),
    /// Print sample count and mean input/output lengths.
    Stats(data::StatsArgs),
    /// Build a post-training dataset variant, optionally with prefix lengths.
    BuildData(data::BuildDataArgs),
    /// Post-train on pseudo-paraphrase pairs.
    PostTrain(train::PostTrainArgs),
    /// Fine-tune on dialogue-summary samples.
    FineTune(train::FineTuneArgs),
    /// Write one summary per line from a checkpoint or a baseline.
    Generate(train::GenerateArgs),
    /// Score candidate summaries with ROUGE.
    Evaluate(report::EvaluateArgs),
    /// Agreement and error rates of human judgements.
    Kappa(report::KappaArgs),
    /// Greedy oracle extraction of dialogue turns against the summary.
    OracleExtract(data::OracleArgs),
}

/// Shared state of one invocation.
pub struct Ctx {
    pub config: ExperimentConfig,
    pub run_dir: PathBuf,
    pub workers: usize,
    pub annotator: Option<String>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => {
            if !p.exists() {
                return Err(UsageError(format!("config file {} does not exist", p.display())).into());
            }
            ExperimentConfig::load(p)?
        }
        None => ExperimentConfig::default(),
    };
    let workers = cli
        .workers
        .or(config.annotate.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    // Fails only if a global pool already exists.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    let ctx = Ctx {
        annotator: cli.annotator.clone().or(config.annotate.backend.clone()),
        config,
        run_dir: cli.run_dir,
        workers,
    };
    match cli.command {
        Command::Convert(a) => data::convert(&ctx, a),
        Command::Stats(a) => data::stats(&ctx, a),
        Command::BuildData(a) => data::build_data(&ctx, a),
        Command::PostTrain(a) => train::post_train(&ctx, a),
        Command::FineTune(a) => train::fine_tune(&ctx, a),
        Command::Generate(a) => train::generate(&ctx, a),
        Command::Evaluate(a) => report::evaluate(&ctx, a),
        Command::Kappa(a) => report::kappa(&ctx, a),
        Command::OracleExtract(a) => data::oracle_extract(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            eprintln!("Run `dialsum --help` for usage.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
