//! `reifenberg`: generate fixtures, build parameterizations, evaluate and audit them.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 schema error, 3 audit failure,
//! 4 numeric failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "reifenberg", version, about = "Reifenberg-type parameterizations of sampled sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a point cloud from a generator spec.
    Gen(Common),
    /// Per-scale β numbers and Jones sums at selected samples.
    Betas(Common),
    /// Fit nets and planes, audit them and write the map.
    Build(Common),
    /// Apply a map (or its ambient extension) to query points.
    Eval(Common),
    /// Re-audit a stored map.
    Audit(Common),
    /// Consolidated audit, distortion and flatness report.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, value_name = "N", env = "REIFENBERG_THREADS")]
    threads: Option<usize>,
    /// Overrides the seed of sampled statistics.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Evaluate maps whose audit fails.
    #[arg(long)]
    force: bool,
}

type Run = fn(&Context) -> CliResult<Vec<PathBuf>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (Run, Common) = match cli.command {
        Command::Gen(c) => (commands::gen, c),
        Command::Betas(c) => (commands::betas, c),
        Command::Build(c) => (commands::build, c),
        Command::Eval(c) => (commands::eval, c),
        Command::Audit(c) => (commands::audit, c),
        Command::Report(c) => (commands::report, c),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let ctx = Context { config: common.config, out: common.out, seed: common.seed, force: common.force };
    match run(&ctx) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
