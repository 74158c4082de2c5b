//! Run manifest and buffered output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use zcnas::io;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to reproduce a run. Contains no timestamps, so equal
/// runs produce equal manifests.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Value,
    pub config: Value,
    pub version: String,
    pub seeds: Vec<u64>,
    /// Input path to SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    /// Output file (relative to the directory) to SHA-256 digest.
    pub outputs: BTreeMap<String, String>,
    /// Derived values worth keeping next to the outputs.
    pub notes: Value,
}

impl Manifest {
    pub fn new(command: &str, args: Value, config: Value, seeds: Vec<u64>) -> Self {
        Manifest {
            command: command.to_string(),
            args,
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Input(format!("cannot read `{}`: {e}", path.display())))?;
        self.inputs
            .insert(path.display().to_string(), io::sha256_hex(&bytes));
        Ok(())
    }
}

/// Collects outputs in memory and writes them, then the manifest, at the
/// end; each file is written atomically.
pub struct OutputDir {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl OutputDir {
    pub fn new(dir: &Path) -> Self {
        OutputDir {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), contents.into());
    }

    /// Records a file that was already written in place.
    pub fn existing(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = std::fs::read(self.path(name))?;
        self.files.insert(name.to_string(), bytes);
        Ok(())
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<(), CliError> {
        for (name, bytes) in &self.files {
            manifest.outputs.insert(name.clone(), io::sha256_hex(bytes));
            io::atomic_write(&self.dir.join(name), bytes)?;
        }
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        io::atomic_write(&self.dir.join(MANIFEST), text.as_bytes())?;
        Ok(())
    }
}
