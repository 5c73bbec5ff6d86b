//! Workflows behind the `fom` binary: solve, certify, warm-start, heat-map
//! export and comparison. Each command writes into one output directory
//! together with a manifest that pins the configuration, seeds and versions.

pub mod commands;
pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fom::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `manifest.json`: everything needed to rerun a command byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub cli_version: String,
    pub core_version: String,
    /// SHA-256 of the effective `config.toml` written next to the manifest.
    pub config_sha256: String,
    pub problem_id: String,
    pub problem: String,
    pub seeds: BTreeMap<String, u64>,
    /// Content hashes of the sample sets, by role.
    pub samples: BTreeMap<String, String>,
    /// Command-line values that are not part of the config.
    pub arguments: BTreeMap<String, String>,
    /// SHA-256 of every other file in the directory.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, problem: &fom::problems::ControlProblem<f64>) -> Self {
        Manifest {
            command: command.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            core_version: fom::VERSION.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            problem_id: problem.id().into(),
            problem: problem.name().into(),
            seeds: BTreeMap::new(),
            samples: BTreeMap::new(),
            arguments: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }
}

/// Output directory that records the hash of every file written into it.
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        create_dir(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.root.join(name), text)?;
        self.files.insert(name.into(), sha256_hex(text.as_bytes()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn write_json_lines<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        self.write(name, &text)
    }

    /// Writes `manifest.json` listing the files written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.files = std::mem::take(&mut self.files);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_text(&self.root.join("manifest.json"), &text)
    }
}
