use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fusion::CanonicalEntity;
use crate::tsv;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodeSystem {
    SnomedCt,
    Umls,
    Other(String),
}

impl CodeSystem {
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "SNOMED_CT" | "SNOMEDCT" | "SNOMED CT" => CodeSystem::SnomedCt,
            "UMLS" => CodeSystem::Umls,
            other => CodeSystem::Other(other.to_string()),
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSystem::SnomedCt => f.write_str("SNOMED_CT"),
            CodeSystem::Umls => f.write_str("UMLS"),
            CodeSystem::Other(name) => f.write_str(name),
        }
    }
}

impl Serialize for CodeSystem {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CodeSystem {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(CodeSystem::parse(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExternalCodeRef {
    pub vocabulary: CodeSystem,
    pub code: String,
}

#[derive(Debug, Error)]
pub enum LookupError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `label<TAB>vocabulary<TAB>code` with a non-empty code")]
    Malformed { line: usize },
}

/// Label to code table from `label<TAB>vocabulary<TAB>code` records.
/// Labels match case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct CodeLookup {
    by_label: BTreeMap<String, Vec<ExternalCodeRef>>,
}

impl CodeLookup {
    pub fn parse(text: &str) -> Result<Self, LookupError> {
        let mut by_label: BTreeMap<String, Vec<ExternalCodeRef>> = BTreeMap::new();
        for rec in tsv::records(text) {
            let [label, vocabulary, code] = rec.fields[..] else {
                return Err(LookupError::Malformed { line: rec.line });
            };
            if label.is_empty() || code.is_empty() {
                return Err(LookupError::Malformed { line: rec.line });
            }
            let codes = by_label.entry(label.to_lowercase()).or_default();
            codes.push(ExternalCodeRef { vocabulary: CodeSystem::parse(vocabulary), code: code.to_string() });
            codes.sort();
            codes.dedup();
        }
        Ok(CodeLookup { by_label })
    }

    pub fn load(path: &Path) -> Result<Self, LookupError> {
        let text = fs::read_to_string(path).map_err(|source| LookupError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn codes(&self, label: &str) -> &[ExternalCodeRef] {
        self.by_label.get(&label.trim().to_lowercase()).map(Vec::as_slice).unwrap_or_default()
    }
}

/// Adds every code listed for the entity's label or aliases. Label and type
/// are untouched; repeating the call adds nothing.
pub fn map_external_codes(mut entity: CanonicalEntity, lookup: &CodeLookup) -> CanonicalEntity {
    let mut codes = entity.external_codes.clone();
    for name in std::iter::once(&entity.label).chain(&entity.aliases) {
        codes.extend(lookup.codes(name).iter().cloned());
    }
    codes.sort();
    codes.dedup();
    entity.external_codes = codes;
    entity
}
