use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::io::write_json;

pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (build ",
    env!("KNOCKFORGE_BUILD_HASH"),
    ")"
);

/// Provenance record written next to every output artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
    pub workers: usize,
    /// Input path → `sha256:<hex>`.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub timestamp: String,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

impl RunManifest {
    pub fn new(seed: u64, workers: usize) -> Self {
        let arguments: Vec<String> = std::env::args().collect();
        RunManifest {
            command_line: arguments.join(" "),
            arguments,
            seed,
            tool_version: VERSION.to_string(),
            workers,
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = sha256_file(path)?;
        self.input_digests
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> CliResult<PathBuf> {
        write_json(path, self)?;
        Ok(path.to_path_buf())
    }
}
