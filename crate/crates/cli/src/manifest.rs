use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Index of one training run's artifacts. Every referenced path existed
/// when the manifest was written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment_id: String,
    /// Dataset directory, or `fixtures:<count>` for synthetic data.
    pub dataset: String,
    pub checkpoints: BTreeMap<String, PathBuf>,
    pub metrics: BTreeMap<String, PathBuf>,
    pub generated: Vec<PathBuf>,
    /// The resolved hyperparameters as `key = value` lines.
    pub config: String,
    /// Milliseconds since the Unix epoch.
    pub created_ms: u64,
}

/// `run-` and 12 hex digits of the SHA-256 of the dataset and config.
pub fn experiment_id(dataset: &str, config: &str) -> String {
    let mut h = Sha256::new();
    h.update(dataset.as_bytes());
    h.update([0]);
    h.update(config.as_bytes());
    let hex: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("run-{hex}")
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl RunManifest {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.checkpoints
            .values()
            .chain(self.metrics.values())
            .chain(&self.generated)
    }

    /// Writes `manifest.json` into `dir` after checking every path exists.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        if let Some(missing) = self.paths().find(|p| !p.exists()) {
            return Err(CliError::Internal(format!(
                "manifest references missing {}",
                missing.display()
            )));
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::write(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
