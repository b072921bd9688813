//! `gaussvol <command> --config <file> [--out <file>] [--n <int>] [--seed <int>]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;
mod error;
mod golden;
mod table;

use commands::Command;
use config::Overrides;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gaussvol", version, about = "Pricing and calibration for Gaussian Stein-Stein volatility models")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration (optional for selftest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides numerics.n.
    #[arg(long)]
    n: Option<usize>,
    /// Overrides mc.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// selftest only: rewrite the bundled ODE smile (to --out if given) and exit.
    #[arg(long)]
    regenerate_golden: bool,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides { n: cli.n, seed: cli.seed };
    if cli.regenerate_golden {
        if cli.command != Command::Selftest {
            return Err(CliError::Config(vec!["--regenerate-golden is a selftest option".into()]));
        }
        let path = cli.out.clone().unwrap_or_else(|| PathBuf::from(golden::DEFAULT_PATH));
        let count = golden::write(&path)?;
        eprintln!("wrote {count} oracle points to {}", path.display());
        return Ok(());
    }
    let cfg = match (&cli.config, cli.command) {
        (Some(path), _) => config::parse_config(path, overrides)?,
        (None, Command::Selftest) => config::defaults(overrides),
        (None, _) => return Err(CliError::Config(vec!["--config is required".into()])),
    };
    commands::run(cli.command, &cfg, cli.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaussvol: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
