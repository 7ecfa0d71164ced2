//! Run manifest: config snapshot, stage status, output inventory and headline metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Running,
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config: ExperimentConfig,
    /// SHA-256 of the serialized configuration, seed included.
    pub input_hash: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
    pub metrics: BTreeMap<String, f64>,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            kind: config.kind.as_str().to_string(),
            config: config.clone(),
            input_hash: sha256_hex(config.to_toml().as_bytes()),
            started_unix: now(),
            finished_unix: None,
            stages: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Ok)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))
    }
}

/// Writes outputs into one directory and keeps the manifest current on disk,
/// so a failing stage leaves every earlier file and its record intact.
pub struct OutputDir {
    root: PathBuf,
    pub manifest: RunManifest,
}

impl OutputDir {
    pub fn create(root: &Path, manifest: RunManifest) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let dir = Self {
            root: root.to_path_buf(),
            manifest,
        };
        dir.save()?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to a temporary name and renames it into place.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.partial"));
        std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        let record = OutputRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        match self.manifest.outputs.iter_mut().find(|o| o.path == name) {
            Some(o) => *o = record,
            None => self.manifest.outputs.push(record),
        }
        self.save()
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn begin(&mut self, stage: &str) -> Result<(), CliError> {
        eprintln!("[{stage}] started");
        self.manifest.stages.push(StageRecord {
            name: stage.to_string(),
            status: StageStatus::Running,
            error: None,
            started_unix: now(),
            finished_unix: None,
        });
        self.save()
    }

    pub fn finish(&mut self, stage: &str, error: Option<&CliError>) -> Result<(), CliError> {
        if let Some(rec) = self.manifest.stages.iter_mut().rev().find(|s| s.name == stage) {
            rec.finished_unix = Some(now());
            rec.status = if error.is_some() { StageStatus::Failed } else { StageStatus::Ok };
            rec.error = error.map(|e| e.to_string());
        }
        match error {
            Some(e) => eprintln!("[{stage}] failed: {e}"),
            None => eprintln!("[{stage}] ok"),
        }
        self.save()
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.manifest.metrics.insert(name.to_string(), value);
    }

    pub fn close(&mut self) -> Result<(), CliError> {
        self.manifest.finished_unix = Some(now());
        self.save()
    }

    fn save(&self) -> Result<(), CliError> {
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
