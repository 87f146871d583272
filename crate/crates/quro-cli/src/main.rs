//! `quro`: command-line front end for the robust quantile solver.
//!
//! Every command reads one JSON problem configuration (see
//! `schema/config.schema.json`) and writes its artifacts into `--out`.
//! Numbers in CSV artifacts carry 17 significant digits, so runs with the
//! same config and seed are byte-identical.
//!
//! Exit codes: 0 success; 2 the invocation or config is unusable (schema
//! violation, invalid inputs, IO); 3 the problem itself says no (no
//! multiplier, no price, failed well-posedness check); 4 an iteration
//! failed to converge. Log verbosity follows the `RUST_LOG` environment
//! variable, e.g. `RUST_LOG=info`.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "quro",
    version,
    about = "Robust terminal-wealth optimization in quantile space"
)]
struct Cli {
    /// Problem configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for output artifacts; created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Override the config's grid size.
    #[arg(long, global = true, value_name = "N")]
    grid: Option<usize>,
    /// Override the config's simulation seed.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Override the config's budget-matching tolerance.
    #[arg(long, global = true, value_name = "T")]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal wealth quantile; writes solution.csv and summary.json.
    Solve,
    /// Solve the exponential-utility case by the closed envelope route; same artifacts.
    SolveExp,
    /// Compute the utility-indifference price of the claim; writes price.json.
    Price,
    /// Simulate hedged wealth paths along the solved problem; writes paths.csv.
    Simulate,
    /// Diagnose well-posedness and tail dominance; writes check.json.
    Check,
    /// Export the concave-envelope geometry; writes envelope.csv.
    Envelope,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow!("--config is required"))?;
    let mut cfg = config::load(path)?;
    if let Some(n) = cli.grid {
        cfg.grid_n = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.tolerances.budget = t;
    }
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match cli.command {
        Command::Solve => commands::solve(&cfg, &cli.out),
        Command::SolveExp => commands::solve_exp(&cfg, &cli.out),
        Command::Price => commands::price(&cfg, &cli.out),
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Check => commands::check(&cfg, &cli.out),
        Command::Envelope => commands::envelope(&cfg, &cli.out),
    }
}

/// Maps failures onto the exit-code contract. The solver's own taxonomy
/// wins when present; everything else (unreadable config, schema
/// violations, unwritable outputs) is an unusable invocation.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<quro_core::Error>() {
            return match e {
                quro_core::Error::Invalid(_) => 2,
                quro_core::Error::IllPosed(_) => 3,
                quro_core::Error::Numerical(_) => 4,
            };
        }
    }
    2
}
