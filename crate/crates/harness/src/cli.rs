use crate::commands::{self, Outcome};
use crate::config::{Overrides, RunConfig};
use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use euv_ilt::generator::GeneratorMode;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "euv-ilt",
    version,
    about = "EUV mask and physics co-optimization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render canonical templates with their statistics.
    GeneratePatterns(Common),
    /// Train one pattern kind.
    Train(Common),
    /// Progressive physics ablation on one kind.
    Ablate(Common),
    /// Train several kinds and summarize.
    Sweep {
        /// One model for all kinds, with a single set of physics parameters.
        #[arg(long)]
        shared: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Figure panels for a finished training run.
    Render {
        /// Run directory written by `train`.
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Pattern kind; repeat or comma-separate. Also `all`, `standard`, `advanced`.
    #[arg(long = "kind")]
    pub kinds: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<GeneratorMode>,
}

impl Common {
    fn resolve(&self, run_dir: Option<PathBuf>) -> Result<RunConfig> {
        self.resolve_with(run_dir, false)
    }

    fn resolve_with(&self, run_dir: Option<PathBuf>, shared: bool) -> Result<RunConfig> {
        let over = Overrides {
            seed: self.seed,
            epochs: self.epochs,
            kinds: self.kinds.clone(),
            out: self.out.clone(),
            mode: self.mode,
            run_dir,
            shared,
        };
        RunConfig::resolve(self.config.as_deref(), &over)
    }
}

/// Runs a parsed command. A training abort comes back as an error after the
/// artifacts are written.
pub fn run(cli: Cli) -> Result<Outcome> {
    let outcome = match cli.command {
        Command::GeneratePatterns(c) => commands::generate_patterns(&c.resolve(None)?)?,
        Command::Train(c) => commands::train(&c.resolve(None)?)?,
        Command::Ablate(c) => commands::ablate_cmd(&c.resolve(None)?)?,
        Command::Sweep { shared, common } => commands::sweep(&common.resolve_with(None, shared)?)?,
        Command::Render { run_dir, common } => commands::render(&common.resolve(run_dir)?)?,
    };
    Ok(outcome)
}
