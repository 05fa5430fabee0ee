//! Run manifests: everything needed to audit or replay a command.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        let data = fs::read(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved arguments, config file already merged in.
    pub args: Vec<String>,
    /// Directory the command ran in; relative paths are resolved against it.
    pub cwd: PathBuf,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
    /// Headline numbers and timings; not part of the reproducibility contract.
    pub results: serde_json::Value,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config: serde_json::Value, seeds: Vec<u64>) -> io::Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            cwd: std::env::current_dir()?,
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: String::new(),
            results: serde_json::Value::Null,
        })
    }

    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> io::Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Stamps the finish time and writes the manifest as pretty JSON.
    pub fn finish(mut self, path: &Path) -> io::Result<()> {
        self.finished_at = now();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(&self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.cwd.join(p)
        }
    }

    /// Files whose current contents differ from the recorded digests.
    pub fn mismatched_outputs(&self) -> Vec<PathBuf> {
        self.outputs
            .iter()
            .filter(|d| {
                let now = FileDigest::of(&self.resolve(&d.path));
                !matches!(now, Ok(n) if n.sha256 == d.sha256)
            })
            .map(|d| d.path.clone())
            .collect()
    }

    /// Input files that changed or vanished since the run.
    pub fn mismatched_inputs(&self) -> Vec<PathBuf> {
        self.inputs
            .iter()
            .filter(|d| !matches!(FileDigest::of(&self.resolve(&d.path)), Ok(n) if n.sha256 == d.sha256))
            .map(|d| d.path.clone())
            .collect()
    }
}
