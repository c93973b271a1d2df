use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record of one command invocation, stored next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; re-running them reproduces the outputs.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_s: f64,
}

pub struct ManifestBuilder {
    command: String,
    args: Vec<String>,
    started: Instant,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: &[String]) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            args: args.to_vec(),
            started: Instant::now(),
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
        }
    }

    pub fn config(&mut self, value: impl Serialize) -> &mut Self {
        self.config = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.outputs.push(path.into());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn finish(&self) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            args: self.args.clone(),
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            seed: self.seed,
            version: TOOLKIT_VERSION.to_string(),
            duration_s: self.started.elapsed().as_secs_f64(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<RunManifest> {
        let manifest = self.finish();
        write_json(path, &manifest)?;
        Ok(manifest)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `dir/stem.ext` becomes `dir/stem.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}
