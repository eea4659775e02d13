//! Run manifests: arguments plus content digests of inputs and outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(FileDigest {
            path: path.to_owned(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn record(
        subcommand: &str,
        args: Vec<String>,
        parameters: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: subcommand.to_owned(),
            args,
            parameters,
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path.to_owned())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    /// Outputs whose digest differs from the recorded one.
    pub mismatched: Vec<PathBuf>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Reruns a recorded command and compares output digests. Inputs must still
/// match their recorded digests.
pub fn replay(manifest_path: &Path) -> Result<ReplayReport> {
    let manifest = Manifest::read(manifest_path)?;
    for input in &manifest.inputs {
        let now = FileDigest::of(&input.path)?;
        ensure!(now.sha256 == input.sha256, "input {} changed since the recorded run", input.path.display());
    }
    crate::run(&manifest.args)?;
    let mut mismatched = Vec::new();
    for output in &manifest.outputs {
        if FileDigest::of(&output.path)?.sha256 != output.sha256 {
            mismatched.push(output.path.clone());
        }
    }
    Ok(ReplayReport { mismatched })
}
