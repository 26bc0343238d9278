use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use reidbias::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run; lists every file the run wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config_path: Option<PathBuf>,
    /// Resolved `key = value` text, replayable through `--config`.
    pub resolved_config: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_secs: f64,
}

/// Collects outputs while a command runs.
pub struct Recorder {
    started: Instant,
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

impl Recorder {
    pub fn new(out_dir: &Path, config_path: Option<&Path>) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(Self {
            started: Instant::now(),
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                command: std::env::args().collect(),
                config_path: config_path.map(Path::to_path_buf),
                resolved_config: String::new(),
                seed: 0,
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                duration_secs: 0.0,
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    pub fn wrote(&mut self, path: PathBuf) {
        self.manifest.outputs.push(path);
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.wrote(path.clone());
        Ok(path)
    }

    /// Writes the manifest itself, listed among its own outputs.
    pub fn finish(mut self) -> Result<RunManifest> {
        let path = self.path(MANIFEST_FILE);
        self.manifest.outputs.push(path.clone());
        self.manifest.duration_secs = self.started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}
