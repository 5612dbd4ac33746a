//! Run manifests: what went in, what came out, and their SHA-256 digests.
//!
//! The worker count and output directory are left out on purpose, so two
//! runs that differ only in those produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    parameters: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    #[serde(skip)]
    out_dir: PathBuf,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(command: &str, parameters: serde_json::Value, out_dir: &Path) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("{}: cannot read", path.display()))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: digest(&bytes),
        });
        Ok(())
    }

    /// Writes `bytes` to `name` under the output directory and records it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("{}: cannot create", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("{}: cannot write", path.display()))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: digest(bytes),
        });
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(&self)?;
        text.push(b'\n');
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("{}: cannot write", path.display()))
    }
}
