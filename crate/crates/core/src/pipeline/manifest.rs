use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub started_at: DateTime<Utc>,
    pub elapsed_ms: u64,
    pub counts: BTreeMap<String, usize>,
    /// Set when the stage failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What one invocation did, written to `<work_dir>/manifests/<run_id>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub started_at: DateTime<Utc>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_digest: &str) -> Self {
        let started_at = Utc::now();
        let nonce = crate::extraction::sha256_hex(
            format!("{config_digest}\0{}\0{}", started_at.timestamp_nanos_opt().unwrap_or_default(), std::process::id()).as_bytes(),
        );
        RunManifest {
            run_id: format!("run-{}-{}", started_at.format("%Y%m%dT%H%M%S"), &nonce[..8]),
            config_digest: config_digest.to_string(),
            started_at,
            stages: Vec::new(),
        }
    }

    /// Runs `f` as stage `name`, recording its timing, counts and outcome.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<(T, BTreeMap<String, usize>), PipelineError>,
    ) -> Result<T, PipelineError> {
        let started_at = Utc::now();
        let clock = Instant::now();
        let out = f();
        let elapsed_ms = clock.elapsed().as_millis() as u64;
        let (result, counts, error) = match out {
            Ok((v, counts)) => (Ok(v), counts, None),
            Err(e) => {
                let msg = e.to_string();
                (Err(e), BTreeMap::new(), Some(msg))
            }
        };
        self.stages.push(StageRecord { stage: name.to_string(), started_at, elapsed_ms, counts, error });
        result
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let path = dir.join(format!("{}.json", self.run_id));
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| PipelineError::io(&path, e))?;
        Ok(path)
    }
}

pub(crate) fn counts<const N: usize>(pairs: [(&str, usize); N]) -> BTreeMap<String, usize> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
