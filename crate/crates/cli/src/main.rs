use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rsi_cli::{cmd_report, cmd_simulate, cmd_synthesize, cmd_verify, threads_from_env, CliError, Exit};

/// Communication-aware safety controller synthesis.
#[derive(Parser)]
#[command(name = "rsi", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search (kappa, rho) for a feasible controller and write the result with its trace.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the invariance conditions of a result and sample the invariance oracle.
    Verify {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// 0 skips the oracle.
        #[arg(long, default_value_t = 10_000)]
        oracle_samples: usize,
    },
    /// Run the Monte-Carlo campaign and write per-trial traces plus a summary.
    Simulate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Emit plot-ready ellipse, state and input tables next to the summary.
    Report {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        result: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Exit, CliError> {
    if let Some(n) = threads_from_env(std::env::var("RSI_THREADS").ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut out = io::stdout().lock();
    match cli.cmd {
        Cmd::Synthesize { config, out: path } => cmd_synthesize(&config, &path, &mut out),
        Cmd::Verify {
            result,
            config,
            oracle_samples,
        } => cmd_verify(&result, &config, oracle_samples, &mut out),
        Cmd::Simulate {
            result,
            config,
            out_prefix,
        } => cmd_simulate(&result, &config, &out_prefix, &mut out),
        Cmd::Report { summary, result } => cmd_report(&summary, &result, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Usage.code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(exit) => ExitCode::from(exit.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit().code() as u8)
        }
    }
}
