use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ppe_cli::commands::{self, Context};
use ppe_cli::config;
use ppe_core::game::SupportPolicy;
use ppe_core::grid::GridPolicy;

/// Analyzer, equilibrium engine and simulator for repeated games with
/// two-signal public monitoring.
#[derive(Parser)]
#[command(name = "ppe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (INI-style sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Override the `[simulation]` seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the `[simulation]` episode count.
    #[arg(long, global = true)]
    episodes: Option<u64>,

    /// Override the `[simulation]` horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Override the `[analysis]` grid resolution.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Require full support on the whole grid, not just on-path profiles.
    #[arg(long, global = true)]
    strict_support: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the four structural assumptions and print witnesses.
    Validate,
    /// Deviation rates, floors, discount threshold, condition margins.
    Analyze,
    /// Play one seeded trajectory of the online engine.
    Run,
    /// Monte Carlo payoff estimation and deviation testing.
    Simulate,
    /// Sweep d0 / kappa / delta and emit the designer frontier.
    Sweep,
    /// Brute-force decomposability verification over a covering grid.
    Oracle,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config else {
        eprintln!("--config PATH is required");
        return ExitCode::from(commands::EXIT_INPUT as u8);
    };
    let mut cfg = match config::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(commands::EXIT_INPUT as u8);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(episodes) = cli.episodes {
        cfg.simulation.episodes = episodes;
    }
    if let Some(horizon) = cli.horizon {
        cfg.simulation.horizon = horizon;
    }
    if let Some(grid) = cli.grid {
        cfg.analysis.grid = grid.max(2);
    }
    let support = if cli.strict_support || cfg.analysis.strict_support {
        SupportPolicy::Strict
    } else {
        SupportPolicy::Reachable
    };
    let ctx = Context {
        config: cfg,
        out_dir: cli.out,
        policy: GridPolicy::default(),
        support,
    };
    let code = match cli.command {
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Analyze => commands::cmd_analyze(&ctx),
        Command::Run => commands::cmd_run(&ctx),
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Sweep => commands::cmd_sweep(&ctx),
        Command::Oracle => commands::cmd_oracle(&ctx),
    };
    ExitCode::from(code as u8)
}
