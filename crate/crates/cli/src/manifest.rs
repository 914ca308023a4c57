use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use permembed::files::to_sorted_json;
use permembed::EmbeddingSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::UsageError;

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest(path: &Path) -> Result<(String, u64)> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0_u8; 1 << 16];
    let mut bytes = 0_u64;
    loop {
        let k = file.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
        bytes += k as u64;
    }
    let hex = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((hex, bytes))
}

/// The replayable part of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Invocation {
    pub strict: bool,
    pub command: Command,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub invocation: Invocation,
    pub spec: Option<EmbeddingSpec>,
    pub seeds: BTreeMap<String, u64>,
    /// Paths as passed on the command line.
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub threads: usize,
    pub passed: Option<bool>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_FILE);
        fs::write(&path, to_sorted_json(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(RUN_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("{} is not a run manifest: {e}", path.display())).into())
    }

    /// Input files whose content no longer matches the recorded hash.
    pub fn changed_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for f in &self.inputs {
            match digest(Path::new(&f.path)) {
                Ok((h, _)) if h == f.sha256 => {}
                _ => changed.push(f.path.clone()),
            }
        }
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, b"abc").unwrap();
        let (hex, bytes) = digest(&p).unwrap();
        assert_eq!(hex, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(bytes, 3);
    }
}
