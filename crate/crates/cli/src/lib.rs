//! Pipeline stages, the `explain` query and the HTTP service behind the
//! `xdrive` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xdrive_core::dataset::DatasetError;
use xdrive_core::ddpg::DdpgError;
use xdrive_core::neural::NeuralError;
use xdrive_core::render::RenderError;
use xdrive_core::sim::SimError;
use xdrive_core::vqa::{Prediction, VqaError};

pub mod config;
pub mod service;
pub mod stages;

pub use config::{Driver, Overrides, Paths, Profile, Questions, RunConfig};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pipeline.md")]
mod book {}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("`{stage}` needs {}; run `xdrive {producer}` first", path.display())]
    MissingPrerequisite {
        stage: &'static str,
        path: PathBuf,
        producer: &'static str,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ddpg(#[from] DdpgError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Vqa(#[from] VqaError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Written next to every stage's artifacts. Holds no wall-clock time, so
/// reruns with the same config reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    pub versions: Versions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub xdrive: String,
    /// Bumped when an artifact layout changes.
    pub artifacts: u32,
}

pub const STAMP_FILE: &str = "stamp.json";

impl Stamp {
    pub fn new(stage: &str, cfg: &RunConfig) -> Self {
        Self {
            stage: stage.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            versions: Versions {
                xdrive: env!("CARGO_PKG_VERSION").to_string(),
                artifacts: 1,
            },
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_file(&dir.join(STAMP_FILE), &(serde_json::to_string_pretty(self).expect("stamp serializes") + "\n"))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(STAMP_FILE);
        let text = read_file(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// One answer row as printed by `explain --format json` and returned by
/// `POST /api/ask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub text: String,
    pub prob: f64,
}

pub fn answer_rows(p: &Prediction) -> Vec<AnswerRow> {
    p.answers
        .iter()
        .map(|a| AnswerRow {
            text: a.text.clone(),
            prob: a.prob,
        })
        .collect()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}
