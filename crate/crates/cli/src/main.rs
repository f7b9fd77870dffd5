use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rbfgen_cli::{parse_config, run, RunConfig, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Demo1d,
    Beam,
    Crossval,
    Fit,
    Predict,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Demo1d => "demo1d",
            Command::Beam => "beam",
            Command::Crossval => "crossval",
            Command::Fit => "fit",
            Command::Predict => "predict",
        }
    }
}

/// Knowledge-guided RBF surrogate studies.
#[derive(Debug, Parser)]
#[command(name = "rbfgen", version)]
struct Args {
    command: Command,
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// One worker and zeroed timings for byte-identical reruns.
    #[arg(long)]
    deterministic: bool,
}

fn execute(args: &Args) -> Result<(), rbfgen_cli::CliError> {
    let config: RunConfig = parse_config(&args.config)?;
    if config.name() != args.command.name() {
        return Err(rbfgen_cli::CliError::Config(format!(
            "command: config is for `{}` but `{}` was requested",
            config.name(),
            args.command.name()
        )));
    }
    let opts = RunOptions {
        jobs: args.jobs,
        deterministic: args.deterministic,
    };
    for path in run(&config, opts)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rbfgen {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
