use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ItemTarget, ReviewError};
use crate::extraction::CandidateTriple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Reject,
    Edit,
}

/// A recorded decision. Never changed after it is appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub decision_id: String,
    pub item_id: String,
    pub target: ItemTarget,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_triple: Option<CandidateTriple>,
    /// Chosen contender index, for conflict items only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<usize>,
    pub reviewer_id: String,
    #[serde(default)]
    pub note: String,
    pub decided_at: DateTime<Utc>,
}

/// Append-only JSONL log of decisions. With a path, each append is synced
/// to disk before it is acknowledged.
#[derive(Debug, Default)]
pub struct DecisionLog {
    path: Option<PathBuf>,
    decisions: Vec<ReviewDecision>,
    ids: BTreeSet<String>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> ReviewError {
    ReviewError::Io { path: path.display().to_string(), message: e.to_string() }
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Reads an existing log (or starts one). A torn final line is dropped.
    pub fn open(path: &Path) -> Result<Self, ReviewError> {
        let mut log = DecisionLog { path: Some(path.to_path_buf()), ..Default::default() };
        if !path.exists() {
            return Ok(log);
        }
        let f = File::open(path).map_err(|e| io(path, e))?;
        let lines: Vec<String> = BufReader::new(f).lines().collect::<Result<_, _>>().map_err(|e| io(path, e))?;
        let last = lines.iter().rposition(|l| !l.trim().is_empty());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ReviewDecision>(line) {
                Ok(d) => log.push(d).map_err(|e| io(path, format!("line {}: {e}", i + 1)))?,
                Err(_) if Some(i) == last => break,
                Err(e) => return Err(io(path, format!("line {}: {e}", i + 1))),
            }
        }
        Ok(log)
    }

    fn push(&mut self, d: ReviewDecision) -> Result<(), ReviewError> {
        if !self.ids.insert(d.decision_id.clone()) {
            return Err(ReviewError::State(format!("decision {} already recorded", d.decision_id)));
        }
        self.decisions.push(d);
        Ok(())
    }

    pub fn append(&mut self, d: ReviewDecision) -> Result<(), ReviewError> {
        if self.ids.contains(&d.decision_id) {
            return Err(ReviewError::State(format!("decision {} already recorded", d.decision_id)));
        }
        if let Some(path) = &self.path {
            let mut line = serde_json::to_vec(&d).expect("decision serializes");
            line.push(b'\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io(path, e))?;
            f.write_all(&line).and_then(|_| f.sync_data()).map_err(|e| io(path, e))?;
        }
        self.push(d)
    }

    pub fn decisions(&self) -> &[ReviewDecision] {
        &self.decisions
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}
