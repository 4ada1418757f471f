//! Canonical run configs and the config-hash run directories.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use signalpred::interaction::SdgParams;
use signalpred::model::{HyperParams, VarietyMode};
use signalpred::sim::ScenarioConfig;
use std::fs;
use std::path::{Path, PathBuf};

use crate::{config_err, runtime_err, CliResult};

/// FNV-1a over the canonical JSON; the hex digest names the run directory.
pub fn fingerprint(canonical_json: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in canonical_json.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerateConfig {
    pub command: String,
    pub scenario: ScenarioConfig,
    pub frames: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    pub stride: usize,
    pub split_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainRunConfig {
    pub command: String,
    pub data_fingerprint: String,
    pub hp: HyperParams,
    pub sdg: SdgParams,
    pub epochs: usize,
    pub seed: u64,
    pub k_variety: usize,
    pub lambda_adv: f64,
    pub variety: VarietyMode,
    pub precision: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalRunConfig {
    pub command: String,
    pub data_fingerprint: String,
    pub checkpoint_fingerprint: String,
    pub split: String,
    pub k: usize,
    pub seed: u64,
}

/// Serializes the config, creates `out/<hash>/`, writes `config.json`, and
/// returns the run directory plus the hash.
pub fn init_run_dir<T: Serialize + DeserializeOwned + PartialEq>(
    out: &Path,
    config: &T,
) -> CliResult<(PathBuf, String)> {
    let canonical = serde_json::to_string(config).map_err(runtime_err)?;
    // Canonical-form check: the JSON round-trips to the same document.
    let reparsed: T = serde_json::from_str(&canonical).map_err(runtime_err)?;
    let again = serde_json::to_string(&reparsed).map_err(runtime_err)?;
    if again != canonical {
        return Err(crate::CliError::Runtime(
            "config does not round-trip to canonical JSON".into(),
        ));
    }
    let hash = fingerprint(&canonical);
    let dir = out.join(&hash);
    fs::create_dir_all(&dir).map_err(runtime_err)?;
    let pretty = serde_json::to_string_pretty(config).map_err(runtime_err)?;
    fs::write(dir.join("config.json"), pretty).map_err(runtime_err)?;
    Ok((dir, hash))
}

pub fn load_config<T: DeserializeOwned>(dir: &Path) -> CliResult<T> {
    let path = dir.join("config.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(config_err)
}
