use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Manifest file name inside every output directory.
pub const RECORD_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub reason: String,
    pub detail: String,
}

/// The reproducibility envelope of a run. Written with `finalized: false`
/// before compute starts, so a crashed run is recognisable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub config: Value,
    pub master_seed: u64,
    /// Label paths of the random streams the run derives, with index ranges.
    pub seed_lineage: Vec<String>,
    pub artifact_version: String,
    pub workers: usize,
    pub started_unix: u64,
    pub wall_time_s: f64,
    /// Data files relative to the output directory, in emission order.
    pub files: Vec<String>,
    pub status: RunStatus,
    pub finalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<Abort>,
    /// Experiment-level results; the tables live in `files`.
    pub summary: Value,
}

impl RunRecord {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let tmp = dir.join(format!("{RECORD_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, dir.join(RECORD_FILE))
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(RECORD_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}
