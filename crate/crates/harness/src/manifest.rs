use crate::config::RunConfig;
use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub run: String,
    pub epochs: usize,
    pub total_seconds: f64,
    pub mean_epoch_seconds: f64,
    pub epoch_seconds: Vec<f64>,
}

impl Timing {
    pub fn new(run: impl Into<String>, epoch_seconds: &[f64]) -> Self {
        let total: f64 = epoch_seconds.iter().sum();
        Self {
            run: run.into(),
            epochs: epoch_seconds.len(),
            total_seconds: total,
            mean_epoch_seconds: if epoch_seconds.is_empty() {
                0.0
            } else {
                total / epoch_seconds.len() as f64
            },
            epoch_seconds: epoch_seconds.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the echoed `config.json`.
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    pub files: Vec<String>,
    pub timings: Vec<Timing>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// An output directory being filled by one command.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
    started_at: String,
    files: BTreeSet<String>,
    timings: Vec<Timing>,
}

impl RunDir {
    /// Creates the directory and echoes the resolved config into it.
    pub fn create(root: &Path, command: &str, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let mut text = serde_json::to_string_pretty(cfg)?;
        text.push('\n');
        let path = root.join(CONFIG_FILE);
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        let mut files = BTreeSet::new();
        files.insert(CONFIG_FILE.to_string());
        Ok(Self {
            root: root.to_path_buf(),
            command: command.into(),
            config_hash: hex(&Sha256::digest(text.as_bytes())),
            seed: cfg.train.seed,
            started_at: now(),
            files,
            timings: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path for an artifact, registered in the manifest. Parent directories
    /// are created.
    pub fn file(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.insert(rel.replace('\\', "/"));
        Ok(path)
    }

    pub fn add_timing(&mut self, t: Timing) {
        self.timings.push(t);
    }

    /// Writes the manifest through a temporary file and a rename.
    pub fn finish(self, status: &str) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: self.config_hash,
            seed: self.seed,
            started_at: self.started_at,
            finished_at: now(),
            status: status.into(),
            files: self.files.into_iter().collect(),
            timings: self.timings,
        };
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.root.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}
