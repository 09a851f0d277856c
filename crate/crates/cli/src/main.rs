//! `pfode`: run function-space diffusion experiments from a TOML config.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;
use output::OutDir;

#[derive(Parser)]
#[command(name = "pfode", version, about = "Function-space diffusion sampling and evaluation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `sampler.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw ODE/SDE samples for every configured method and NFE.
    Sample,
    /// Compare samplers against exact data draws across NFEs.
    SweepNfe,
    /// Heat-equation fidelity of synthetic space-time fields.
    HeatEval,
    /// Kernel two-sample test power per method and NFE.
    TestPower,
    /// Write the truncated eigenbasis.
    BasisDump,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let shown = path.display().to_string();
    let source = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{shown}: {e}")))?;
    let parsed = config::parse(&shown, &source)?;
    let cfg = parsed.resolve(&shown, &source, cli.seed, cli.out.clone())?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = OutDir::create(&cfg.out)?;
    match cli.command {
        Command::Sample => commands::sample_cmd(&cfg, &out),
        Command::SweepNfe => commands::sweep_nfe(&cfg, &out),
        Command::HeatEval => commands::heat_eval(&cfg, &out),
        Command::TestPower => commands::test_power_cmd(&cfg, &out),
        Command::BasisDump => commands::basis_dump(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
