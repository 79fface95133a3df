//! `qqa`: search for exact quantum query algorithms.
//!
//! Exit codes: 0 certified (or command succeeded), 3 finished uncertified,
//! 2 usage or input error, 1 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;
use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "qqa", version, about = "Variational synthesis of quantum query algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Suppress the summary on stdout and progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a fixed (t, d_w, partition) circuit and write a solution record.
    Solve,
    /// Sweep query count, workspace and partitions for the first certified cell.
    Search,
    /// Write |Gram| matrices after each query for a stored record.
    Gram { record: PathBuf },
    /// Re-simulate a stored record and certify it.
    Verify { record: PathBuf },
    /// Write the function table and E_i matrices for the SDP cross-check.
    SdpExport {
        /// Query count; defaults to `circuit.t` from the config.
        #[arg(long)]
        t: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides { out: cli.out.clone(), seed: cli.seed, threads: cli.threads, quiet: cli.quiet };
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Solve => commands::solve(config, &ov),
        Command::Search => commands::search(config, &ov),
        Command::Gram { record } => commands::gram_cmd(record, &ov),
        Command::Verify { record } => commands::verify(record, &ov),
        Command::SdpExport { t } => commands::sdp_export(config, *t, &ov),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
