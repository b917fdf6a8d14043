use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tgasched::config::ProjectConfig;
use tgasched::pipeline::{run_pipeline, Stage};

/// Synthesize conflict-free network schedules for event-triggered loops.
///
/// Log verbosity follows `TGASCHED_LOG` (e.g. `TGASCHED_LOG=debug`).
#[derive(Parser, Debug)]
#[command(name = "tgasched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Project configuration (TOML).
    #[arg(long, global = true, default_value = "tgasched.toml")]
    config: PathBuf,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// First simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of conic regions, overriding the configuration.
    #[arg(long, global = true)]
    q: Option<usize>,
    /// Ticks per time unit, overriding the configuration.
    #[arg(long, global = true)]
    scale: Option<i64>,
    /// Print the synthesized strategy as readable rules.
    #[arg(long, global = true)]
    print_strategy: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Compute timing bounds and region transitions, build loop automata.
    Abstract,
    /// Compose the network and loop automata.
    Compose,
    /// Solve the safety game and extract a strategy.
    Synthesize,
    /// Co-simulate the plants under the strategy and verify the traces.
    Simulate,
    /// Run every stage.
    All,
    /// Check the configuration only.
    Validate,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Abstract => vec![Stage::Abstract],
            Command::Compose => vec![Stage::Compose],
            Command::Synthesize => vec![Stage::Synthesize],
            Command::Simulate => vec![Stage::Simulate],
            Command::All => Stage::ALL.to_vec(),
            Command::Validate => Vec::new(),
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = ProjectConfig::load(&cli.config)?;
    if let Some(q) = cli.q {
        cfg.q = q;
    }
    if let Some(scale) = cli.scale {
        cfg.scale = scale;
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    let summary = run_pipeline(&cfg, &cli.command.stages(), &cli.out, cli.print_strategy)
        .with_context(|| format!("{:?} failed for `{}`", cli.command, cfg.name))?;
    if matches!(cli.command, Command::Validate) {
        println!("{}: configuration ok", cli.config.display());
    }
    for line in summary.lines {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TGASCHED_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
