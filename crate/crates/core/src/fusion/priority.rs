use std::fs;
use std::path::Path;

use super::FusionError;
use crate::tsv;

/// Issuing organisations, highest priority first. One name per record;
/// rank 1 is the first. Unlisted sources share `default_rank`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourcePriority {
    orgs: Vec<String>,
}

impl SourcePriority {
    pub fn new<S: AsRef<str>>(orgs: &[S]) -> Result<Self, FusionError> {
        let mut out = SourcePriority::default();
        for (i, o) in orgs.iter().enumerate() {
            out.push(o.as_ref().trim(), i + 1)?;
        }
        Ok(out)
    }

    fn push(&mut self, org: &str, line: usize) -> Result<(), FusionError> {
        if org.is_empty() {
            return Err(FusionError::Table { line, message: "empty organisation name".into() });
        }
        if self.orgs.iter().any(|o| o.eq_ignore_ascii_case(org)) {
            return Err(FusionError::Table { line, message: format!("{org:?} listed twice") });
        }
        self.orgs.push(org.to_string());
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, FusionError> {
        let mut out = SourcePriority::default();
        for rec in tsv::records(text) {
            out.push(rec.fields[0], rec.line)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = fs::read_to_string(path).map_err(|e| FusionError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn orgs(&self) -> &[String] {
        &self.orgs
    }

    pub fn default_rank(&self) -> usize {
        self.orgs.len() + 1
    }

    /// 1-based; case-insensitive.
    pub fn rank(&self, org: &str) -> usize {
        self.orgs
            .iter()
            .position(|o| o.eq_ignore_ascii_case(org.trim()))
            .map_or(self.default_rank(), |i| i + 1)
    }
}
