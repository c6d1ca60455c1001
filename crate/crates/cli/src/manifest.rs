//! Run manifests: what a command read and wrote, with checksums, seeds and
//! timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset_io;
use crate::error::{CliError, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory for outputs; as given for inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub formats: BTreeMap<String, u32>,
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Wall-clock seconds per stage.
    pub timings_s: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn output(&self, path: &str) -> Option<&FileRecord> {
        self.outputs.iter().find(|r| r.path == path)
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let bytes = fsutil::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::format(path, e.column() as u64, format!("invalid manifest: {e}")))
    }
}

/// Writes outputs atomically under one directory and records each in the
/// manifest.
pub struct Recorder {
    out: PathBuf,
    manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let mut formats = BTreeMap::new();
        formats.insert("dataset".into(), dataset_io::FORMAT_VERSION);
        formats.insert("checkpoint".into(), checkpoint::VERSION);
        Recorder {
            out: config.output_dir.clone(),
            manifest: RunManifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                formats,
                config_hash: config.hash(),
                config: config.clone(),
                seeds: config.seeds(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings_s: BTreeMap::new(),
                notes: Vec::new(),
            },
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        fsutil::atomic_write(&path, bytes)?;
        self.manifest.outputs.retain(|r| r.path != rel);
        self.manifest.outputs.push(FileRecord {
            path: rel.into(),
            sha256: fsutil::sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn input(&mut self, label: &str, bytes: &[u8]) {
        self.manifest.inputs.push(FileRecord {
            path: label.into(),
            sha256: fsutil::sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.into(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.manifest.notes.push(text.into());
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f(self);
        *self.manifest.timings_s.entry(stage.into()).or_insert(0.0) += start.elapsed().as_secs_f64();
        r
    }

    /// Mutable timing slot for `stage`, starting at zero.
    pub fn manifest_timing(&mut self, stage: &str) -> &mut f64 {
        self.manifest.timings_s.entry(stage.into()).or_insert(0.0)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Writes `manifest-<command>.json` and returns the manifest.
    pub fn finish(self) -> Result<RunManifest> {
        let rel = format!("manifest-{}.json", self.manifest.command);
        let bytes = serde_json::to_vec_pretty(&self.manifest)
            .map_err(|e| CliError::config("manifest", format!("does not serialize: {e}")))?;
        fsutil::atomic_write(&self.out.join(rel), &bytes)?;
        Ok(self.manifest)
    }
}
