//! Atomic file output and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_input(path: &Path, inputs: &mut BTreeMap<String, String>) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    inputs.insert(path.display().to_string(), digest(&bytes));
    Ok(bytes)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Collects the files a run writes and emits its manifest last.
pub struct Run {
    pub manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        read_input(path, &mut self.manifest.inputs)
    }

    pub fn read_text(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.insert(path.display().to_string(), digest(bytes));
        Ok(())
    }

    pub fn finish(self, path: Option<PathBuf>) -> Result<()> {
        if let Some(path) = path {
            let mut text = serde_json::to_string_pretty(&self.manifest)?;
            text.push('\n');
            write_atomic(&path, text.as_bytes())?;
        }
        Ok(())
    }
}

/// `<file>.manifest.json` for file outputs, `<dir>/manifest.json` for directories.
pub fn manifest_path(explicit: Option<&Path>, out: Option<&Path>, out_is_dir: bool) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    let out = out?;
    if out_is_dir {
        Some(out.join("manifest.json"))
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        Some(PathBuf::from(name))
    }
}
