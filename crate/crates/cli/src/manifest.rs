//! Run manifests: enough to rerun a command and get identical artifacts.

use std::path::Path;

use anyhow::{Context, Result};
use recon_core::io::write_json;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Settings;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputFile {
    /// Path relative to the input directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    /// SHA-256 of the compact JSON encoding of `settings`.
    pub config_hash: String,
    pub seed: u64,
    pub settings: &'a Settings,
    pub inputs: Vec<InputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(settings: &Settings) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(settings)?))
}

/// Every regular file under `dir` in sorted order with its digest.
pub fn hash_inputs(dir: &Path) -> Result<Vec<InputFile>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walk stays below its root");
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        let bytes = std::fs::read(entry.path()).with_context(|| format!("reading {}", entry.path().display()))?;
        files.push(InputFile {
            path: parts.join("/"),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(files)
}

pub fn write_manifest(path: &Path, command: &str, settings: &Settings, input: &Path) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash: config_hash(settings)?,
        seed: settings.optimize.seed,
        settings,
        inputs: hash_inputs(input)?,
    };
    Ok(write_json(path, &manifest)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_tracks_settings() {
        let a = Settings::default();
        let mut b = a.clone();
        b.optimize.seed += 1;
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a.clone()).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
