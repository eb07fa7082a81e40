//! One flat, fully serializable configuration shared by every subcommand.
//! The resolution order is: built-in defaults, then command-line flags,
//! then an optional JSON config file. Every run writes its resolved config
//! next to its outputs; feeding that sidecar back through `--config`
//! reproduces the run byte for byte.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub bandwidth: usize,
    pub max_level: usize,
    pub levels: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub mu: f64,
    pub base: f64,
    pub tol: f64,
    pub t_count: usize,
    pub trials: usize,
    pub pairs: usize,
    pub shift: f64,
    pub n_max: usize,
    pub target_decay: f64,
    pub target_norm0: f64,
    pub max_iter: usize,
    pub guard: f64,
    pub rank_tol: f64,
}

impl ExperimentConfig {
    pub fn defaults(command: &str) -> Self {
        ExperimentConfig {
            command: command.to_string(),
            bandwidth: 64,
            max_level: 6,
            levels: 4,
            seed: 1,
            epsilon: 0.1,
            mu: 48.0,
            base: 1.5,
            tol: 1e-12,
            t_count: 64,
            trials: 200,
            pairs: 500,
            shift: 0.1 * std::f64::consts::TAU,
            n_max: 40,
            target_decay: 6.0,
            target_norm0: 1e-2,
            max_iter: 40,
            guard: 10.0,
            rank_tol: 1e-8,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

/// Loads a config file and lets it override the flag-resolved config.
pub fn apply_config_file(cfg: &mut ExperimentConfig, path: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let command = cfg.command.clone();
    *cfg = serde_json::from_str(&text)
        .with_context(|| format!("parsing config file {}", path.display()))?;
    cfg.command = command;
    Ok(())
}

/// Metadata sidecar carried by every output file set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn write_metadata(dir: &Path, meta: &RunMetadata) -> Result<PathBuf> {
    let name = format!("{}_meta.json", meta.command.replace('-', "_"));
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    write_output(dir, &name, &format!("{text}\n"))
}
