use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use bandit_lab::config::parse_config;
use bandit_lab::experiment::{run_experiment, summary_table};

/// Run KL-UCB(alpha) and baseline bandit policies on a configured instance.
#[derive(Debug, Parser)]
#[command(name = "bandit-lab", version)]
struct Cli {
    /// Experiment configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon T (overrides the config).
    #[arg(long)]
    horizon: Option<u64>,
    /// Number of runs (overrides the config).
    #[arg(long)]
    runs: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

const THREADS_VAR: &str = "BANDIT_LAB_THREADS";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };

    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        },
        Err(_) => None,
    };

    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(horizon) = cli.horizon {
        config.horizon = horizon;
    }
    if let Some(runs) = cli.runs {
        config.runs = runs;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }

    match run_experiment(&config, threads) {
        Ok(outcome) => {
            print!("{}", summary_table(&outcome, config.horizon));
            println!("outputs written to {}", outcome.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
