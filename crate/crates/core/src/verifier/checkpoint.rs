//! Checkpoint directory: `params.bin`, `config.json` and `metrics.jsonl`.
//!
//! `params.bin` is `b"FMXP"`, a little-endian u32 format version, a u64
//! parameter count, then that many little-endian f64 values in the flat
//! parameter layout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::backend::BackendName;
use super::model::{ModelConfig, Params};
use super::train::{EpochMetrics, TrainConfig};
use super::VerifierError;
use crate::mixture::MixtureSpec;

const MAGIC: &[u8; 4] = b"FMXP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mixture: MixtureSpec,
    pub backend: BackendName,
    pub backend_seed: u64,
    pub label_map_version: u32,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: CheckpointConfig,
    pub params: Params,
    pub metrics: Vec<EpochMetrics>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> VerifierError + '_ {
    move |source| VerifierError::Io { path: path.display().to_string(), source }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), VerifierError> {
    let tmp: PathBuf = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

pub fn encode_params(params: &Params) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for x in &params.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8], config: ModelConfig) -> Result<Params, VerifierError> {
    let bad = |msg: &str| VerifierError::Checkpoint(msg.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("not a params blob"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported params format version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if count != config.param_count() || bytes.len() != 16 + count * 8 {
        return Err(VerifierError::ShapeMismatch { expected: config.param_count(), found: count });
    }
    let data = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Params { config, data })
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<(), VerifierError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        write_atomic(&dir.join("params.bin"), &encode_params(&self.params))?;
        let config = serde_json::to_vec_pretty(&self.config).expect("config serializes");
        write_atomic(&dir.join("config.json"), &config)?;
        let mut metrics = Vec::new();
        for m in &self.metrics {
            serde_json::to_writer(&mut metrics, m).expect("metrics serialize");
            metrics.push(b'\n');
        }
        write_atomic(&dir.join("metrics.jsonl"), &metrics)
    }

    pub fn load(dir: &Path) -> Result<Self, VerifierError> {
        let cfg_path = dir.join("config.json");
        let raw = fs::read(&cfg_path).map_err(io(&cfg_path))?;
        let config: CheckpointConfig =
            serde_json::from_slice(&raw).map_err(|e| VerifierError::Checkpoint(format!("{}: {e}", cfg_path.display())))?;
        let params_path = dir.join("params.bin");
        let blob = fs::read(&params_path).map_err(io(&params_path))?;
        let params = decode_params(&blob, config.model)?;
        let metrics_path = dir.join("metrics.jsonl");
        let metrics = match fs::read_to_string(&metrics_path) {
            Ok(text) => text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(|e| VerifierError::Checkpoint(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(&metrics_path)(e)),
        };
        Ok(Self { config, params, metrics })
    }
}
