use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_seconds: f64,
    pub exit_code: i32,
    pub error: Option<String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[PathBuf]) -> Vec<FileDigest> {
    paths
        .iter()
        .filter(|p| p.is_file())
        .map(|p| FileDigest {
            path: p.display().to_string(),
            sha256: sha256_file(p).unwrap_or_default(),
        })
        .collect()
}

pub struct ManifestBuilder {
    command: String,
    started: Instant,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            started: Instant::now(),
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(self, out: &Path, exit_code: i32, error: Option<String>) -> std::io::Result<()> {
        fs::create_dir_all(out)?;
        let manifest = RunManifest {
            command: self.command,
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            threads: rayon::current_num_threads(),
            config: self.config,
            inputs: digests(&self.inputs),
            outputs: digests(&self.outputs),
            duration_seconds: self.started.elapsed().as_secs_f64(),
            exit_code,
            error,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        fs::write(out.join("manifest.json"), text + "\n")
    }
}
