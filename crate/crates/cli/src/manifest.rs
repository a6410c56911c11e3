//! Provenance records written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    /// Effective configuration, paths included.
    pub config: BTreeMap<String, String>,
    /// Input path -> SHA-256 of its content. Directories hash their sorted
    /// file list and contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the manifest) -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn hash_file(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut f = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Hash of a file, or of a directory's sorted `(name, content hash)` list.
pub fn hash_path(path: &Path) -> io::Result<String> {
    if !path.is_dir() {
        return hash_file(path);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()?;
    entries.sort();
    let mut h = Sha256::new();
    for p in entries.iter().filter(|p| p.is_file()) {
        h.update(p.file_name().unwrap_or_default().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(hash_file(p)?.as_bytes());
        h.update(b"\n");
    }
    Ok(format!("{:x}", h.finalize()))
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, config: BTreeMap<String, String>) -> Self {
        Manifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            config,
            ..Default::default()
        }
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    /// Records every file in `dir` except the manifest and writes it.
    pub fn finish(mut self, dir: &Path) -> io::Result<()> {
        let mut names: Vec<PathBuf> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        names.sort();
        for p in names.iter().filter(|p| p.is_file()) {
            let name = p.file_name().unwrap_or_default().to_string_lossy().to_string();
            if name != FILE_NAME {
                self.outputs.insert(name, hash_file(p)?);
            }
        }
        let mut text = serde_json::to_string_pretty(&self).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(dir.join(FILE_NAME), text)
    }

    pub fn load(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(FILE_NAME))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }
}
