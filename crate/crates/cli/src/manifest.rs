//! Per-run record of flags, seed, inputs and outputs with content hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file under `path` (or `path` itself), sorted.
pub fn files_under(path: &Path) -> CliResult<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(format!("listing {}", path.display()), e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(format!("listing {}", path.display()), e))?;
    entries.sort();
    for entry in entries {
        out.extend(files_under(&entry)?);
    }
    Ok(out)
}

pub fn hash_paths(paths: &[PathBuf]) -> CliResult<Vec<FileHash>> {
    let mut out = Vec::new();
    for p in paths {
        for file in files_under(p)? {
            if file.file_name().is_some_and(|n| n == MANIFEST_NAME) {
                continue;
            }
            out.push(FileHash {
                path: file.display().to_string(),
                sha256: sha256_file(&file)?,
            });
        }
    }
    Ok(out)
}

impl RunManifest {
    /// Verifies every recorded output hash against the file on disk.
    pub fn verify_outputs(&self) -> CliResult<bool> {
        for f in &self.outputs {
            if sha256_file(Path::new(&f.path))? != f.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
