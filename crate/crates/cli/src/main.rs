mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Vulnerability scoping, exemplar mining, patch generation and evaluation.
#[derive(Debug, Parser)]
#[command(name = "vulnpatch", version)]
struct Cli {
    /// Configuration file (providers, external functions, defaults).
    #[arg(long, global = true, env = config::CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the vulnerability slice of a program.
    Slice(SliceArgs),
    /// Build an exemplar pool from a training dataset.
    Mine(MineArgs),
    /// Generate and validate patches for one sample.
    Patch(PatchArgs),
    /// Score patch results against ground truth and labels.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    /// C source files.
    #[arg(
        long = "source",
        required_unless_present = "graph",
        conflicts_with = "graph"
    )]
    pub sources: Vec<PathBuf>,
    /// Graph-interchange document instead of sources.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Vulnerable lines as `file:line`; a bare line number refers to the only file.
    #[arg(long, required = true, value_delimiter = ',')]
    pub vuln: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub cwe: Vec<String>,
    /// Entry function whose parameters count as program input.
    #[arg(long)]
    pub entry: Option<String>,
    /// Slice JSON; the rendered slice goes beside it with a `.txt` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub provider: String,
    #[arg(long)]
    pub pool: PathBuf,
    /// Samples mined concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub provider: String,
    /// Validator provider ids; validation is skipped when absent.
    #[arg(long, value_delimiter = ',')]
    pub validators: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ceiling on root-cause rounds.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Only compare exemplars sharing a weakness class with the sample.
    #[arg(long)]
    pub cwe_filter: bool,
    #[arg(long)]
    pub entry: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A patch output directory, or a directory of them.
    #[arg(long)]
    pub results: PathBuf,
    /// Human labels (JSON lines); without it only SynEq is judged.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Testing dataset with ground-truth patches.
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Also write a CSV table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = config::Config::load(cli.config.as_deref())
        .map_err(commands::Failure::Usage)
        .and_then(|cfg| match &cli.command {
            Command::Slice(a) => commands::slice(&cfg, a),
            Command::Mine(a) => commands::mine(&cfg, a),
            Command::Patch(a) => commands::patch(&cfg, a),
            Command::Eval(a) => commands::eval(&cfg, a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
