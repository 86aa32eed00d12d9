//! Run manifests: what was run, with which inputs, and what it produced.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector; re-running it reproduces the outputs.
    pub args: Vec<String>,
    pub inputs: Vec<FileDigest>,
    /// Every setting the run used, defaults included.
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<FileDigest>,
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {} for its checksum", path.display()))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// `<out>.manifest.json` next to the result file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
