use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use spinpoint_cli::config::parse_config_unchecked;
use spinpoint_cli::{run, CliError, CliResult, Command};

/// Spin-1/2 point interactions: current checks, scattering sweeps and comb bands.
#[derive(Debug, Parser)]
#[command(name = "spinpoint", version)]
struct Args {
    /// What to compute; overrides `command` in the config.
    #[arg(value_enum)]
    command: Command,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output CSV path; defaults to `output` in the config, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for the momentum sweep.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: Args) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut config = parse_config_unchecked(&text)?;
    config.command = args.command;
    config.validate()?;
    let out = args.out.or_else(|| config.output.clone());

    let outcome = match args.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| run(&config))?,
        None => run(&config)?,
    };
    outcome.write(out.as_deref())
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinpoint: {e}");
            ExitCode::FAILURE
        }
    }
}
