//! One JSON manifest per run directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Seconds since the Unix epoch, or `SOURCE_DATE_EPOCH` when set so that
/// reruns produce identical manifests.
pub fn timestamp() -> u64 {
    if let Some(fixed) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return fixed;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    /// Paths relative to the run directory, in the order written.
    pub artifacts: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outcome: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            artifacts: Vec::new(),
            started_unix: timestamp(),
            finished_unix: 0,
            outcome: Value::Null,
        }
    }

    /// Records `path` (inside `dir`) as produced by this run.
    pub fn record(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.artifacts.push(rel.to_string_lossy().replace('\\', "/"));
    }

    pub fn write(mut self, dir: &Path, outcome: Value) -> std::io::Result<PathBuf> {
        self.finished_unix = timestamp();
        self.outcome = outcome;
        self.artifacts.push(MANIFEST_NAME.to_string());
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
