//! `asdglue` command-line driver. Exit codes: 0 on success with all checks
//! passing, 2 when a declared check fails, 1 on any error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Experiment};
use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "asdglue",
    version,
    about = "Splice, solve and verify ASD connections on lattice charts"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "ASDGLUE_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, env = "ASDGLUE_OUT")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "ASDGLUE_THREADS")]
    threads: Option<usize>,
    /// Seed; overrides `solver.seed`.
    #[arg(long, global = true, env = "ASDGLUE_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BPST instanton from `[background]` with its curvature diagnostics.
    Instanton,
    /// Spliced connection from `[background]` and `[[sites]]`.
    Splice,
    /// Low spectrum of the splice (or background).
    Spectrum,
    /// Splice, then solve for the nearby ASD connection.
    Glue,
    /// Run one experiment and check it against its thresholds.
    Verify {
        #[arg(value_enum)]
        experiment: Experiment,
    },
    /// Enumerate wall classes of `[walls]`.
    Walls,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let out = cfg.output.directory.clone();
    let ctx = Context::new(cfg, out)?;
    match cli.command {
        Command::Instanton => commands::instanton(&ctx),
        Command::Splice => commands::splice_cmd(&ctx),
        Command::Spectrum => commands::spectrum_cmd(&ctx),
        Command::Glue => commands::glue_cmd(&ctx),
        Command::Verify { experiment } => commands::verify(&ctx, experiment),
        Command::Walls => commands::walls(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
