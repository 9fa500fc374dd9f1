//! Per-run manifest: what ran, on which inputs, with which settings.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Explicit,
    Generated,
    Unused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    /// Settings other than file paths.
    pub config: Value,
    /// SHA-256 over the subcommand, settings, seed and input contents.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub seed_source: SeedSource,
    pub duration_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the run's identity. `serde_json` maps are ordered, so the
/// encoding is canonical.
pub fn config_hash(subcommand: &str, config: &Value, seed: Option<u64>, inputs: &[InputRecord]) -> String {
    let digests: Vec<&str> = inputs.iter().map(|i| i.sha256.as_str()).collect();
    let identity = serde_json::json!({
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "inputs": digests,
    });
    sha256_hex(identity.to_string().as_bytes())
}

pub struct ManifestBuilder {
    subcommand: String,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    config: Value,
    seed: Option<u64>,
    seed_source: SeedSource,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, config: Value) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config,
            seed: None,
            seed_source: SeedSource::Unused,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn seed(&mut self, seed: u64, source: SeedSource) {
        self.seed = Some(seed);
        self.seed_source = source;
    }

    pub fn finish(self, elapsed: Duration) -> RunManifest {
        RunManifest {
            tool: String::from("reshare"),
            version: String::from(env!("CARGO_PKG_VERSION")),
            config_hash: config_hash(&self.subcommand, &self.config, self.seed, &self.inputs),
            subcommand: self.subcommand,
            inputs: self.inputs,
            outputs: self.outputs,
            config: self.config,
            seed: self.seed,
            seed_source: self.seed_source,
            duration_seconds: elapsed.as_secs_f64(),
        }
    }
}

/// `dir/manifest.json` for directory outputs, `<file>.manifest.json`
/// otherwise.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
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
    fn hash_ignores_paths_and_key_order() {
        let a = InputRecord {
            path: "x/in.csv".into(),
            sha256: "00".into(),
        };
        let b = InputRecord {
            path: "y/other.csv".into(),
            sha256: "00".into(),
        };
        let c1: Value = serde_json::from_str(r#"{"k": 1, "a": "x"}"#).unwrap();
        let c2: Value = serde_json::from_str(r#"{"a": "x", "k": 1}"#).unwrap();
        assert_eq!(config_hash("fit", &c1, Some(1), std::slice::from_ref(&a)), config_hash("fit", &c2, Some(1), &[b]));
        assert_ne!(config_hash("fit", &c1, Some(1), std::slice::from_ref(&a)), config_hash("fit", &c1, Some(2), &[a]));
    }

    #[test]
    fn manifest_locations() {
        assert_eq!(manifest_path(Path::new("out"), true), Path::new("out/manifest.json"));
        assert_eq!(manifest_path(Path::new("a/p.csv"), false), Path::new("a/p.csv.manifest.json"));
    }
}
