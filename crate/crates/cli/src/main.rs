use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use walsh_sim::{load_config, AppError, Experiment, Overrides};

/// Walsh semimartingale experiments.
#[derive(Parser)]
#[command(name = "walsh-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in name.
    Run {
        /// Path to a JSON config, or the name of a built-in experiment.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_paths: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in experiments.
    List,
    /// Check a config against the schema without running it.
    Validate { config: String },
    /// Print the bundled default config of a built-in experiment.
    Config { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), AppError> {
    match cmd {
        Command::Run { config, seed, n_paths, out } => {
            let cfg = load_config(&config)?;
            let dir = walsh_sim::run(cfg, &Overrides { seed, n_paths, out, workers: None })?;
            println!("{}", dir.display());
        }
        Command::List => {
            for e in Experiment::ALL {
                println!("{:<12} {}", e.name(), e.description());
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("ok: {}", cfg.experiment.name());
        }
        Command::Config { name } => match Experiment::from_name(&name) {
            Some(e) => print!("{}", e.default_config()),
            None => return Err(AppError::config(".", format!("unknown experiment '{name}'"))),
        },
    }
    Ok(())
}
