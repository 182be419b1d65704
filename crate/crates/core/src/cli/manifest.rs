use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// What a command read and wrote, enough to run it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded.
    pub args: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seed: u64,
    /// sha256 over the length-prefixed contents of every input file, hex.
    pub input_hash: String,
    pub output_dir: PathBuf,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], inputs: &[PathBuf], seed: u64, output_dir: &Path) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            args: args.to_vec(),
            config_paths: inputs.to_vec(),
            seed,
            input_hash: hash_inputs(inputs)?,
            output_dir: output_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

pub fn hash_inputs(inputs: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in inputs {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
