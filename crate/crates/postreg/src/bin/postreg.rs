//! Configuration-driven front end: run/sweep/check a regulator setup and
//! shape the outputs into figure-ready CSV files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use postreg::cli::{cmd_check, cmd_plotdata, cmd_run, cmd_sweep, Overrides};

#[derive(Parser)]
#[command(
    name = "postreg",
    about = "Synthesize and simulate postprocessing internal-model regulators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the output directory from the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress console summaries.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured closed loop and write run artifacts.
    Run { config: PathBuf },
    /// Repeat the configured run over a parameter list.
    Sweep {
        config: PathBuf,
        /// Parameter grid, e.g. `g=5,8,10`.
        #[arg(long)]
        param: String,
        /// Also write one trajectory CSV per grid point.
        #[arg(long)]
        trajectories: bool,
    },
    /// Run the configured certification checks.
    Check { config: PathBuf },
    /// Emit figure CSVs from an existing run directory.
    Plotdata { dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ov = Overrides {
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let code = match cli.command {
        Command::Run { config } => cmd_run(&config, &ov),
        Command::Sweep {
            config,
            param,
            trajectories,
        } => cmd_sweep(&config, &param, trajectories, &ov),
        Command::Check { config } => cmd_check(&config, &ov),
        Command::Plotdata { dir } => cmd_plotdata(&dir, ov.quiet),
    };
    ExitCode::from(code as u8)
}
