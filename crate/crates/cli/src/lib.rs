//! The `lightloc` command-line pipeline: synthetic scene generation, place
//! clustering, classifier and regressor training, localization, odometry
//! fusion and reporting, all exchanging artifacts through one directory.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::artifacts::{Artifacts, CONFIG_FILE};
use crate::commands::Context;
use crate::config::RunConfig;
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lightloc", version, about = "Scene-coordinate relocalization pipeline on synthetic LiDAR scenes")]
pub struct Cli {
    /// Config file of `section.key = value` lines; defaults to <out>/config.txt when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; every module derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Let `generate` and `run` replace artifacts in a non-empty directory.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the scene and store train, test and drive frames.
    Generate,
    /// Two-level k-means over training positions.
    Cluster,
    /// Train the place classifier on global features.
    TrainClassifier,
    /// Train the scene-coordinate regressor.
    TrainScr,
    /// Localize the test frames with RANSAC.
    Localize {
        /// Use true world coordinates instead of the regressor.
        #[arg(long)]
        oracle: bool,
    },
    /// Fuse drifting odometry with classifier observations along the drive.
    Fuse,
    /// Collect stage summaries into report/.
    Report,
    /// Every stage in order.
    Run,
    /// Print the resolved config.
    ShowConfig,
}

/// Resolves the config: `--config`, else `<out>/config.txt`, else defaults,
/// then applies `--out` and `--seed`.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let from_out = cli.out.as_ref().map(|o| o.join(CONFIG_FILE)).filter(|p| p.exists());
    let mut cfg = match cli.config.as_ref().or(from_out.as_ref()) {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn timed(art: &Artifacts, name: &str, stage: impl FnOnce() -> CliResult<()>) -> CliResult<()> {
    let start = Instant::now();
    log::info!("{name}: start");
    stage()?;
    let secs = start.elapsed().as_secs_f64();
    log::info!("{name}: done in {secs:.2}s");
    art.append_timing(name, secs)
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.render());
        return Ok(());
    }
    let ctx = Context::new(cfg);
    let art = &ctx.artifacts;
    match &cli.command {
        Command::Generate => timed(art, "generate", || commands::generate(&ctx, cli.force)),
        Command::Cluster => timed(art, "cluster", || commands::cluster(&ctx)),
        Command::TrainClassifier => timed(art, "train-classifier", || commands::classifier(&ctx)),
        Command::TrainScr => timed(art, "train-scr", || commands::scr(&ctx)),
        Command::Localize { oracle } => timed(art, "localize", || commands::localize(&ctx, *oracle)),
        Command::Fuse => timed(art, "fuse", || commands::fuse(&ctx)),
        Command::Report => timed(art, "report", || commands::report(&ctx)),
        Command::Run => {
            timed(art, "generate", || commands::generate(&ctx, cli.force))?;
            timed(art, "cluster", || commands::cluster(&ctx))?;
            timed(art, "train-classifier", || commands::classifier(&ctx))?;
            timed(art, "train-scr", || commands::scr(&ctx))?;
            timed(art, "localize", || commands::localize(&ctx, false))?;
            timed(art, "fuse", || commands::fuse(&ctx))?;
            timed(art, "report", || commands::report(&ctx))
        }
        Command::ShowConfig => unreachable!("handled above"),
    }
}
