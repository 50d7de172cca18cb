//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Every long flag the CLI accepts. The help-text test checks this list
/// against the parser in both directions.
pub const FLAG_REGISTRY: &[&str] = &[
    "task", "policy", "k", "tau", "cost", "k-max", "seeds", "seed", "backend", "endpoint", "model", "out", "config",
    "workers", "bin-width", "help", "version",
];

#[derive(Debug, Parser)]
#[command(
    name = "clarify",
    version,
    about = "Clarify-or-commit dialogue episodes with value-of-information question selection",
    long_about = "Runs clarify-or-commit episodes, cost sweeps, calibration and reports.\n\n\
                  The LLM backend reads its API key from the environment variable named by \
                  `api_key_env` in the config file (OPENAI_API_KEY by default); keys are never \
                  accepted as flags."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one policy configuration over a set of seeds and write episode logs.
    Run(RunArgs),
    /// Run a grid of policies, costs and seeds and write summary tables.
    Sweep(RunArgs),
    /// Bin episode logs by commit-time confidence and report accuracy per bin.
    Calibrate(CalibrateArgs),
    /// Aggregate episode logs into the summary, comparison and curve tables.
    Report(ReportArgs),
    /// Answer the agent's questions yourself in the terminal.
    Play(PlayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exact Bayesian updates from the task's own likelihood tables.
    Exact,
    /// A chat-completions model estimates beliefs and answers.
    Llm,
}

/// Flags shared by every command that runs episodes.
#[derive(Debug, Clone, Default, Args)]
pub struct EpisodeArgs {
    /// Task: toy, animal, medical, mixed20q, flight, shop (comma-separated for sweeps).
    #[arg(long, value_delimiter = ',')]
    pub task: Vec<String>,
    /// Policy: no_question, fixed_round, confidence, adaptive, voi (comma-separated for sweeps).
    #[arg(long, value_delimiter = ',')]
    pub policy: Vec<String>,
    /// Question budget for fixed_round (comma-separated for sweeps).
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Confidence threshold for confidence (comma-separated for sweeps).
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Per-question cost (comma-separated for sweeps).
    #[arg(long, value_delimiter = ',')]
    pub cost: Vec<f64>,
    /// Maximum number of questions per episode [default: per task].
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    /// Backend for belief estimation [default: exact].
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Chat-completions URL for the LLM backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name for the LLM backend.
    #[arg(long)]
    pub model: Option<String>,
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Seeds as a list or ranges, e.g. 0..100 or 1,2,5 or 0..=9.
    #[arg(long, conflicts_with = "seed")]
    pub seeds: Option<String>,
    /// A single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output: a log file for `run`, a directory for `sweep`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for episodes [default: all cores].
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Episode log files (line-delimited JSON).
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Width of each confidence bin.
    #[arg(long = "bin-width", default_value_t = clarify_core::harness::DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; calibration reads logs and draws no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Episode log files (line-delimited JSON).
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Directory for summary.csv, table1.csv and figure2.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accepted for uniformity; reports read logs and draw no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PlayArgs {
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Seed for generated tasks (flight scenario, shop catalog).
    #[arg(long)]
    pub seed: Option<u64>,
}
