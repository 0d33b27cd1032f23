//! Run manifest written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rav_recover::policy::sha256_hex;
use rav_recover::Result;
use serde::Serialize;

/// Version of the CSV layouts this binary writes.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub csv_schema: u32,
    /// SHA-256 of every checkpoint, suite or record read.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every artifact written.
    pub outputs: BTreeMap<String, String>,
    pub version: &'static str,
    /// Set when the command failed.
    pub error: Option<String>,
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl Manifest {
    pub fn new(command: &str, out: &Path, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().collect(),
            config_path: None,
            config_sha256: None,
            seed,
            output_dir: out.to_path_buf(),
            csv_schema: CSV_SCHEMA,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION"),
            error: None,
        }
    }

    pub fn config(&mut self, path: Option<&Path>) -> Result<()> {
        if let Some(p) = path {
            self.config_sha256 = Some(file_hash(p)?);
            self.config_path = Some(p.to_path_buf());
        }
        Ok(())
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), file_hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> Result<()> {
        self.outputs.insert(name.into(), file_hash(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}
