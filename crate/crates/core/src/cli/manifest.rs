use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run: enough to replay it and to check the replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Informational; results never depend on it.
    pub threads: Option<usize>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputDigest>,
    /// SHA-256 of every output file, keyed by path relative to the output
    /// directory (the manifest itself excluded).
    pub outputs: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    /// Fails if an input changed since the manifest was written.
    pub fn check_inputs(&self) -> Result<()> {
        for (role, d) in &self.inputs {
            let now = file_digest(&d.path)?;
            if now != d.sha256 {
                return Err(Error::Validation(format!(
                    "input `{role}` ({}) changed since the manifest was written",
                    d.path.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests of every file under `root`, keyed by `/`-separated relative path.
pub fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if !root.exists() {
        return Ok(out);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key != "manifest.json" {
                out.insert(key, file_digest(&path)?);
            }
        }
    }
    Ok(out)
}
