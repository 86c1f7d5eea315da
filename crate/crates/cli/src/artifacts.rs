//! Hashed artifact files and per-command manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::ValidationError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub const MANIFEST: &str = "manifest.json";

/// Written last by each command: hashes of everything it read and wrote,
/// keyed by path relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub case_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Output directory of one command.
pub struct Stage<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    dir: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Stage<'a> {
    pub fn new(cfg: &'a RunConfig, command: &'static str, dir: &'static str) -> Result<Self> {
        let path = cfg.out_dir.join(dir);
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Stage {
            cfg,
            command,
            dir,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let rel = format!("{}/{name}", self.dir);
        let path = self.cfg.out_dir.join(&rel);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(rel, sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Read and verify an artifact produced by an earlier command.
    pub fn read(&mut self, producer: &str, dir: &str, name: &str) -> Result<Vec<u8>> {
        let (rel, bytes) = read_verified(&self.cfg.out_dir, producer, dir, name)?;
        self.inputs.insert(rel, sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, producer: &str, dir: &str, name: &str) -> Result<String> {
        Ok(String::from_utf8(self.read(producer, dir, name)?)?)
    }

    pub fn finish(self) -> Result<Manifest> {
        let case = fs::read(&self.cfg.case).with_context(|| format!("reading {}", self.cfg.case.display()))?;
        let manifest = Manifest {
            command: self.command.to_string(),
            config_sha256: self.cfg.fingerprint(),
            case_sha256: sha256_hex(&case),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let path = self.cfg.out_dir.join(self.dir).join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn read_manifest(out_dir: &Path, dir: &str) -> Result<Option<Manifest>> {
    let path = out_dir.join(dir).join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    ))
}

fn read_verified(out_dir: &Path, producer: &str, dir: &str, name: &str) -> Result<(String, Vec<u8>)> {
    let rel = format!("{dir}/{name}");
    let missing = || {
        ValidationError(format!(
            "missing {rel} in {}; run `cascade {producer}` first",
            out_dir.display()
        ))
    };
    let manifest = read_manifest(out_dir, dir)?.ok_or_else(missing)?;
    let expected = manifest.outputs.get(&rel).ok_or_else(missing)?;
    let path = out_dir.join(&rel);
    let bytes = fs::read(&path).map_err(|_| missing())?;
    if &sha256_hex(&bytes) != expected {
        return Err(ValidationError(format!(
            "{} does not match its manifest hash; rerun `cascade {producer}`",
            path.display()
        ))
        .into());
    }
    Ok((rel, bytes))
}
