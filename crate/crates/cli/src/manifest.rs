use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Backend {
    pub kind: String,
    pub model: String,
}

/// Written next to every artifact a command produces.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: &'static str,
    pub config: Config,
    pub backend: Option<Backend>,
    pub inputs: BTreeMap<String, String>,
    /// Output path to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub started_at: f64,
    pub finished_at: f64,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, started_at: f64) -> Self {
        Self {
            command: command.to_owned(),
            engine_version: cirag::ENGINE_VERSION,
            config: config.clone(),
            backend: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
            started_at,
            finished_at: started_at,
        }
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.to_owned(), path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write_in(self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        self.write_to(&dir.join(MANIFEST_FILE))
    }

    /// Writes `<file>.manifest.json` next to a single-file output.
    pub fn write_beside(self, file: &Path) -> Result<PathBuf> {
        let mut name = file.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.write_to(&file.with_file_name(name))
    }

    fn write_to(mut self, path: &Path) -> Result<PathBuf> {
        self.finished_at = now();
        std::fs::write(path, serde_json::to_string_pretty(&self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path.to_owned())
    }
}
