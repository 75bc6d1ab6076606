use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::log::{Termination, TrialLog};
use super::ProtocolError;
use crate::config::SimConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "squeeze-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub trial_index: usize,
    pub seed: u64,
    pub termination: Termination,
}

/// Directory index: provenance and the trial files in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub agent_id: String,
    pub session_seed: u64,
    pub config_hash: String,
    pub config: SimConfig,
    pub trials: Vec<ManifestEntry>,
}

pub fn write_dataset(
    dir: &Path,
    logs: &[TrialLog],
    cfg: &SimConfig,
    session_seed: u64,
) -> Result<Manifest, ProtocolError> {
    fs::create_dir_all(dir)?;
    let mut trials = Vec::with_capacity(logs.len());
    for log in logs {
        let file = format!("trial_{:04}.jsonl", log.trial_index);
        fs::write(dir.join(&file), log.to_jsonl_string())?;
        trials.push(ManifestEntry { file, trial_index: log.trial_index, seed: log.seed, termination: log.termination });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        agent_id: logs.first().map(|l| l.agent_id.clone()).unwrap_or_default(),
        session_seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        trials,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<TrialLog>), ProtocolError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| ProtocolError::Data(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| ProtocolError::Data(format!("malformed manifest {}: {e}", path.display())))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(ProtocolError::Data(format!("unsupported dataset format `{}`", manifest.format)));
    }
    let mut logs = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let file = fs::File::open(dir.join(&entry.file))
            .map_err(|e| ProtocolError::Data(format!("cannot open {}: {e}", entry.file)))?;
        let log = TrialLog::read_jsonl(BufReader::new(file))?;
        logs.push(log);
    }
    Ok((manifest, logs))
}
