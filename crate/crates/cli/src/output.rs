//! Run artifacts: summary JSON, CSV tables and the hash manifest.

use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::AppError;

pub const SUMMARY: &str = "summary.json";
pub const MANIFEST: &str = "manifest.json";

/// Files of one run, kept in memory until written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_slice())
    }

    pub fn summary(&self) -> Option<Value> {
        self.get(SUMMARY).and_then(|b| serde_json::from_slice(b).ok())
    }

    /// `{"files": [{"name", "bytes", "sha256"}]}` sorted by name, excluding the manifest.
    pub fn manifest(&self) -> Value {
        let mut entries: Vec<&(String, Vec<u8>)> = self.files.iter().filter(|f| f.0 != MANIFEST).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let files: Vec<Value> = entries
            .iter()
            .map(|(name, bytes)| json!({ "name": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }))
            .collect();
        json!({ "files": files })
    }

    pub fn write(&self, dir: &Path) -> Result<(), AppError> {
        let io = |e: std::io::Error| AppError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes).map_err(io)?;
        }
        let manifest = pretty(&self.manifest());
        std::fs::write(dir.join(MANIFEST), manifest).map_err(io)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("JSON values serialise");
    s.push(b'\n');
    s
}

/// The config as echoed into the summary: everything except the worker
/// count and the output directory, which do not affect results.
pub fn params_echo(cfg: &ExperimentConfig) -> Value {
    let mut c = cfg.clone();
    c.batch.workers = None;
    c.output.dir = None;
    serde_json::to_value(&c).expect("config serialises")
}

/// Builds `summary.json`.
pub fn summary(cfg: &ExperimentConfig, n_paths: usize, statistics: Map<String, Value>, tests: Map<String, Value>) -> Vec<u8> {
    pretty(&json!({
        "experiment": cfg.experiment.name(),
        "params": params_echo(cfg),
        "n_paths": n_paths,
        "seed": cfg.batch.seed,
        "statistics": statistics,
        "test_results": tests,
    }))
}
