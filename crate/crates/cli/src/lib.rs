//! Configuration-driven experiment runner for `walsh-core`.
//!
//! A run reads one JSON config, simulates a batch of paths and writes a
//! summary JSON, CSV tables and a manifest of content hashes into the output
//! directory. Results depend only on the config and the seed.

pub mod config;
pub mod experiments;
pub mod output;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use walsh_core::batch::BatchRunner;

pub use config::{Experiment, ExperimentConfig};
pub use output::Artifacts;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "WALSH_SIM_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("numerical failure: {0}")]
    Numeric(#[from] walsh_core::Error),
    #[error("io error: {0}")]
    Io(String),
}

impl AppError {
    pub fn config(path: impl Into<String>, message: impl Display) -> Self {
        AppError::Config { path: path.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config { .. } => 2,
            AppError::Numeric(_) => 3,
            AppError::Io(_) => 1,
        }
    }
}

/// Overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Loads a config from a file, or the bundled default when `arg` names a
/// built-in experiment and no such file exists.
pub fn load_config(arg: &str) -> Result<ExperimentConfig, AppError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Io(format!("{arg}: {e}")))?;
        return config::parse(&text);
    }
    match Experiment::from_name(arg) {
        Some(e) => config::parse(e.default_config()),
        None => Err(AppError::config(".", format!("'{arg}' is neither a config file nor a built-in experiment"))),
    }
}

/// Worker count: explicit override, then the environment, then the config,
/// then the available parallelism.
pub fn worker_count(cfg: &ExperimentConfig, explicit: Option<usize>) -> Result<usize, AppError> {
    if let Some(w) = explicit {
        return Ok(w);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(AppError::config(THREADS_ENV, format!("expected a positive integer, got '{v}'"))),
        };
    }
    Ok(cfg
        .batch
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

/// Applies overrides, runs the experiment and returns the artifacts without
/// touching the disk.
pub fn execute(mut cfg: ExperimentConfig, ov: &Overrides) -> Result<(ExperimentConfig, Artifacts), AppError> {
    if let Some(s) = ov.seed {
        cfg.batch.seed = s;
    }
    if let Some(n) = ov.n_paths {
        cfg.batch.n_paths = n;
    }
    if let Some(o) = &ov.out {
        cfg.output.dir = Some(o.clone());
    }
    config::validate(&cfg)?;
    let workers = worker_count(&cfg, ov.workers)?;
    let runner = BatchRunner::new(workers).map_err(|e| AppError::config("batch.workers", e))?;
    let art = experiments::run(&cfg, &runner)?;
    Ok((cfg, art))
}

/// Default output directory for an experiment.
pub fn default_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("walsh-out").join(cfg.experiment.name())
}

/// Runs and writes the artifacts; returns the output directory.
pub fn run(cfg: ExperimentConfig, ov: &Overrides) -> Result<PathBuf, AppError> {
    let (cfg, art) = execute(cfg, ov)?;
    let dir = cfg.output.dir.clone().unwrap_or_else(|| default_out_dir(&cfg));
    art.write(&dir)?;
    Ok(dir)
}
