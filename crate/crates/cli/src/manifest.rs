use std::path::{Path, PathBuf};
use std::time::Instant;

use ltcs::{LtcsError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    /// Command-specific flags that are not part of `config`.
    pub arguments: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub tool_version: String,
    pub duration_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `results.csv` -> `results.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    sibling(primary, "manifest.json")
}

/// `dir/name.ext` -> `dir/name.<suffix>`.
pub fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    primary.with_file_name(format!("{stem}.{suffix}"))
}

/// Fails unless every path is free or `force` is set.
pub fn check_writable(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(LtcsError::Config(format!("{} already exists (pass --force to overwrite)", p.display()))),
        None => Ok(()),
    }
}

pub struct Recorder {
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(command: &'static str) -> Self {
        Recorder { command, started: Instant::now(), inputs: Vec::new() }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Hashes inputs and outputs and writes the manifest beside `primary`.
    pub fn finish(
        self,
        config: &RunConfig,
        arguments: serde_json::Value,
        primary: &Path,
        outputs: &[PathBuf],
    ) -> Result<PathBuf> {
        let record = |p: &PathBuf| Ok(FileRecord { path: p.clone(), sha256: sha256_file(p)? });
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: config.clone(),
            arguments,
            seed: config.train.seed,
            inputs: self.inputs.iter().map(record).collect::<Result<_>>()?,
            outputs: outputs.iter().map(record).collect::<Result<_>>()?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(primary);
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| LtcsError::Data(e.to_string()))?;
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}
