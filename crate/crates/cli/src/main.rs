use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use phasecp_cli::commands;
use phasecp_cli::config::{parse_ranks, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "phasecp",
    version,
    about = "Phase-sliced similarity tensors and non-negative symmetric CP analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the N x N x P cosine-similarity tensor from an embeddings CSV.
    BuildTensor(Overrides),
    /// Fit a non-negative symmetric CP model at one rank.
    Fit(Overrides),
    /// Rank diagnostics: core consistency, SSE curve and holdout RMSE.
    Diagnose(Overrides),
    /// Holdout RMSE only, for each rank in the diagnostics range.
    Holdout(Overrides),
    /// t-SNE of the fitted video loadings.
    Project(Overrides),
    /// build-tensor, fit, diagnose and project in sequence.
    Pipeline(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML (or .json) configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    /// Ranks to screen, e.g. `1-10` or `1,2,4`.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    mask_frac: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    perplexity: Option<f64>,
}

impl Overrides {
    fn resolve(self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.embeddings {
            cfg.paths.embeddings = Some(v);
        }
        if let Some(v) = self.metadata {
            cfg.paths.metadata = Some(v);
        }
        if let Some(v) = self.out_dir {
            cfg.paths.out_dir = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.rank {
            cfg.fit.rank = v;
        }
        if let Some(v) = self.ranks {
            cfg.diagnostics.ranks = parse_ranks(&v)?;
        }
        if let Some(v) = self.restarts {
            cfg.fit.restarts = v;
        }
        if let Some(v) = self.iters {
            cfg.fit.iters = v;
        }
        if let Some(v) = self.mask_frac {
            cfg.diagnostics.mask_fraction = v;
        }
        if let Some(v) = self.trials {
            cfg.diagnostics.trials = v;
        }
        if let Some(v) = self.perplexity {
            cfg.tsne.perplexity = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildTensor(o) => commands::cmd_build_tensor(&o.resolve()?).map(drop),
        Command::Fit(o) => commands::cmd_fit(&o.resolve()?).map(drop),
        Command::Diagnose(o) => commands::cmd_diagnose(&o.resolve()?).map(drop),
        Command::Holdout(o) => commands::cmd_holdout(&o.resolve()?).map(drop),
        Command::Project(o) => commands::cmd_project(&o.resolve()?).map(drop),
        Command::Pipeline(o) => commands::cmd_pipeline(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
