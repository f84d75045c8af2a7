use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::write_json;

/// A named pass/fail outcome with a one-line detail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to reproduce and audit a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    /// SHA-256 over `blob <len>\0` followed by the resolved config.
    pub input_hash: String,
    pub config: serde_json::Value,
    pub timings: Vec<Timing>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub verdicts: Vec<VerdictLine>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

/// Content hash in the style of a git blob id.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

impl RunRecord {
    pub fn new(subcommand: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        let canonical = serde_json::to_vec(&config).unwrap_or_default();
        RunRecord {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            input_hash: content_hash(&canonical),
            config,
            timings: Vec::new(),
            artifacts: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
            error: None,
        }
    }

    pub fn pass(&self) -> bool {
        self.error.is_none() && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(VerdictLine {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn artifact(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self);
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run.json"), self)
    }
}
