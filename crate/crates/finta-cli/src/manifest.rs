//! Run manifests: every invocation writes one JSON manifest describing the
//! fully resolved parameters, input/output hashes and timings, and `finta
//! rerun <manifest>` repeats the run to byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use finta::error::Result;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub subcommand: String,
    /// Fully resolved arguments, defaults included.
    pub params: Value,
    pub threads: usize,
    pub prng: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn records(paths: &[&Path]) -> Result<Vec<FileRecord>> {
    paths
        .iter()
        .map(|p| Ok(FileRecord { path: p.to_path_buf(), sha256: sha256_file(p)? }))
        .collect()
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| finta::Error::CorruptFile {
            offset: e.column() as u64,
            message: format!("bad manifest: {e}"),
        })
    }
}
