#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgrd_core::par::Execution;

use crate::config::{parse_config, RunConfig};
use crate::error::CliError;

/// Stochastic reaction-diffusion solver on polygonal meshes.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for Monte Carlo realizations (1 runs sequentially).
    #[arg(short, long, global = true, env = "SGRD_WORKERS")]
    workers: Option<usize>,

    /// 100 realizations on levels 16, 32, 64, 128.
    #[arg(long, global = true)]
    full_scale: bool,

    /// Output directory, overriding `output.dir`.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Seed, overriding `run.seed`.
    #[arg(short, long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write one mesh file per level.
    GenerateMesh,
    /// Consistency, conformity and dual-norm diagnostics per level.
    Diagnose,
    /// Monte Carlo strong-error convergence study.
    Converge,
    /// Wave amplitude and front tracking for a list of noise levels.
    Wave,
    /// One realization with field snapshots and per-step norms.
    Run,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenerateMesh => "generate-mesh",
            Command::Diagnose => "diagnose",
            Command::Converge => "converge",
            Command::Wave => "wave",
            Command::Run => "run",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text, cli.full_scale)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    if cli.workers == Some(0) {
        return Err(CliError::invalid("workers", "workers must be ≥ 1"));
    }
    let exec = Execution::from_workers(cli.workers);
    let outputs = match cli.command {
        Command::GenerateMesh => commands::generate_mesh(&cfg)?,
        Command::Diagnose => commands::diagnose(&cfg)?,
        Command::Converge => commands::converge(&cfg, exec)?,
        Command::Wave => commands::wave(&cfg, exec)?,
        Command::Run => commands::run(&cfg)?,
    };
    manifest::write_outputs(&cfg.output_dir, cli.command.name(), &cfg, &outputs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
