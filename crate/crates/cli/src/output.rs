//! Run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: &str = "pyroflux.manifest/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(p: &Path) -> anyhow::Result<String> {
    Ok(sha256_hex(&fs::read(p).with_context(|| format!("reading {}", p.display()))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    /// Part of `output_digest`; false for files carrying wall-clock timings.
    pub deterministic: bool,
}

/// A pass/fail gate evaluated by the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the effective configuration as written to `config.json`.
    pub config_digest: String,
    pub started: String,
    pub finished: String,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<OutputFile>,
    /// SHA-256 over the `name sha256` lines of deterministic outputs, sorted by name.
    pub output_digest: String,
    pub status: String,
    pub checks: Vec<Check>,
}

/// Digest of the deterministic outputs, independent of directory and order.
pub fn output_digest(outputs: &[OutputFile]) -> String {
    let mut lines: Vec<String> =
        outputs.iter().filter(|o| o.deterministic).map(|o| format!("{} {}\n", o.file, o.sha256)).collect();
    lines.sort();
    sha256_hex(lines.concat().as_bytes())
}

/// An output directory being filled by one command.
pub struct RunDir {
    pub path: PathBuf,
    outputs: Vec<OutputFile>,
}

impl RunDir {
    /// Creates `<out>/<timestamp>-<digest8>/`, adding a counter if a run
    /// with the same name already exists.
    pub fn create(out: &Path, started: &chrono::DateTime<chrono::Utc>, config_digest: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let base = format!("{}-{}", started.format("%Y%m%dT%H%M%S%.3fZ"), &config_digest[..8]);
        let mut path = out.join(&base);
        let mut k = 1;
        while path.exists() {
            path = out.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::create_dir(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path, outputs: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], deterministic: bool) -> anyhow::Result<()> {
        let p = self.path.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(OutputFile { file: name.into(), sha256: sha256_hex(bytes), deterministic });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, deterministic: bool) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes, deterministic)
    }

    /// Writes `manifest.json` and returns it.
    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        self,
        command: &str,
        seed: Option<u64>,
        config_digest: String,
        started: chrono::DateTime<chrono::Utc>,
        inputs: Vec<InputFile>,
        status: &str,
        checks: Vec<Check>,
    ) -> anyhow::Result<Manifest> {
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_digest,
            started: started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            output_digest: output_digest(&self.outputs),
            outputs: self.outputs,
            inputs,
            status: status.into(),
            checks,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.path.join("manifest.json"), bytes)?;
        Ok(manifest)
    }
}
