//! Run manifests: digests of every input and output plus solver provenance.

use super::files::{to_json, write_text};
use crate::error::{ModelError, Result};
use crate::model::Residuals;
use crate::spatial_eq::SolverOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> Result<FileDigest> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledResiduals {
    pub label: String,
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub solver: SolverOptions,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub residuals: Vec<LabeledResiduals>,
    pub spec_hashes: Vec<(String, String)>,
}

/// Writes files under one directory and remembers their digests.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn new(root: &Path) -> Self {
        OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.root.join(name), text)?;
        self.written.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &to_json(value))
    }

    pub fn written(&self) -> &[FileDigest] {
        &self.written
    }

    /// Writes the manifest last, listing everything written before it.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.outputs = self.written;
        write_text(&self.root.join(MANIFEST_FILE), &to_json(&manifest))?;
        Ok(manifest)
    }
}
