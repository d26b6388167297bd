//! Run manifests: what ran, with which config, producing which artifacts.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub struct RunManifest {
    command: String,
    config_digest: String,
    base_seed: u64,
    started: Instant,
    artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: &str, base_seed: u64, started: Instant) -> Self {
        Self {
            command: command.to_string(),
            config_digest: config_digest.to_string(),
            base_seed,
            started,
            artifacts: Vec::new(),
        }
    }

    pub fn with_artifacts(mut self, paths: &[&Path]) -> Self {
        self.artifacts = paths.iter().map(|p| p.display().to_string()).collect();
        self
    }

    /// Write atomically: to a sibling temp file, then rename into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        let value = serde_json::json!({
            "schema_version": 1,
            "command": self.command,
            "config_digest": self.config_digest,
            "base_seed": self.base_seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "duration_seconds": self.started.elapsed().as_secs_f64(),
            "artifacts": self.artifacts,
        });
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&value)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
