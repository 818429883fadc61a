use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use har_cli::commands::{self, Context};
use har_cli::{CliError, OutputLayout, RunConfig};
use har_core::Split;

/// Human activity recognition from inertial signals with a two-channel CNN.
#[derive(Parser)]
#[command(name = "har", version)]
struct Cli {
    /// TOML run configuration; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root containing train/ and test/ (overrides the config).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for initialization and shuffling (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check both splits against the published per-class counts.
    Validate,
    /// Write the feature caches and normalization statistics.
    Extract {
        /// Keep at most this many windows per split, classes taken in turn.
        #[arg(long)]
        subset: Option<usize>,
    },
    /// Train the network, extracting features first if needed.
    Train {
        #[arg(long)]
        subset: Option<usize>,
        /// Number of epochs (overrides the config).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a split with a checkpoint and write the report files.
    Evaluate {
        #[arg(long, default_value = "test")]
        split: Split,
        /// Checkpoint to load; defaults to model.harmcnn in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        subset: Option<usize>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.dataset {
        config.dataset_root = d;
    }
    if let Some(o) = cli.out {
        config.output_dir = o;
    }
    if let Some(s) = cli.seed {
        config.train.seed = s;
    }
    if let Command::Train { epochs: Some(e), .. } = cli.command {
        config.train.epochs = e;
    }
    config.check()?;

    let stdout = &mut io::stdout().lock();
    let mut stderr = io::stderr();
    let subset = match cli.command {
        Command::Extract { subset } | Command::Train { subset, .. } | Command::Evaluate { subset, .. } => subset,
        Command::Validate | Command::Config => None,
    };
    let mut ctx = Context {
        config: &config,
        subset,
        log: &mut stderr,
    };
    match cli.command {
        Command::Validate => commands::validate(&config.dataset_root, stdout),
        Command::Extract { .. } => commands::extract(&mut ctx).map(|_| ()),
        Command::Train { .. } => commands::train(&mut ctx).map(|_| ()),
        Command::Evaluate { split, checkpoint, .. } => {
            let checkpoint = checkpoint.unwrap_or_else(|| OutputLayout::new(&config.output_dir).checkpoint());
            let report = commands::evaluate(&mut ctx, &checkpoint, split)?;
            let _ = write!(stdout, "{}", report.summary());
            Ok(())
        }
        Command::Config => {
            let _ = write!(stdout, "{}", config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Messages already embed their causes.
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
