//! Guideline documents: loading, preprocessing and chunking.
//!
//! Offsets throughout this module are byte offsets into UTF-8 text.

mod chunk;
mod preprocess;
mod vocabulary;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use chunk::{chunk_document, chunk_id, reconstruct, Chunk, ChunkPolicy};
pub use preprocess::{
    preprocess, BoilerplateRules, NormalizedDocument, Preprocessor, RemovalReason, RemovedSpan, Substitution,
};
pub use vocabulary::{ControlledVocabulary, VocabularyEntry};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{source_uri}: not valid UTF-8 (first bad byte at {valid_up_to})")]
    Encoding { source_uri: String, valid_up_to: usize },
    #[error("{source_uri}: document body is empty")]
    EmptyDocument { source_uri: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad metadata sidecar: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error("duplicate document id {doc_id} ({first} and {second})")]
    DuplicateDocument { doc_id: String, first: String, second: String },
    #[error("vocabulary line {line}: {message}")]
    Vocabulary { line: usize, message: String },
    #[error("boilerplate pattern line {line}: {message}")]
    Boilerplate { line: usize, message: String },
    #[error("invalid chunk policy: {0}")]
    Config(String),
}

/// Physiological system tag ("Endocrine", "Circulatory", ...). Open set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemTag(String);

impl SystemTag {
    /// Systems the framework is designed to cover; other tags are accepted.
    pub const KNOWN: [&'static str; 8] = [
        "Musculoskeletal",
        "Respiratory",
        "Urinary",
        "Digestive",
        "Cardiovascular",
        "Endocrine",
        "Nervous",
        "Immune-hematologic",
    ];

    pub fn new(tag: &str) -> Self {
        SystemTag(tag.trim().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_known(&self) -> bool {
        Self::KNOWN.iter().any(|k| k.eq_ignore_ascii_case(&self.0))
    }
}

impl fmt::Display for SystemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sidecar metadata, stored next to each document as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    pub title: String,
    pub issuing_org: String,
    pub physiological_system: SystemTag,
    pub source_uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineDocument {
    pub doc_id: String,
    pub title: String,
    pub issuing_org: String,
    pub physiological_system: SystemTag,
    pub source_uri: String,
    pub raw_text: String,
    pub ingested_at: DateTime<Utc>,
}

/// `doc-` followed by the first 16 hex digits of SHA-256(bytes ‖ 0x00 ‖ uri).
pub fn document_id(source: &[u8], source_uri: &str) -> String {
    let mut h = Sha256::new();
    h.update(source);
    h.update([0u8]);
    h.update(source_uri.as_bytes());
    format!("doc-{}", &hex::encode(h.finalize())[..16])
}

/// Decodes `source` as UTF-8 plain text or Markdown and attaches metadata.
pub fn load_document(source: &[u8], metadata: &DocumentMetadata) -> Result<GuidelineDocument, CorpusError> {
    let text = std::str::from_utf8(source).map_err(|e| CorpusError::Encoding {
        source_uri: metadata.source_uri.clone(),
        valid_up_to: e.valid_up_to(),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyDocument { source_uri: metadata.source_uri.clone() });
    }
    if metadata.issuing_org.trim().is_empty() {
        return Err(CorpusError::Metadata {
            path: PathBuf::from(&metadata.source_uri),
            message: "issuing_org must not be empty".into(),
        });
    }
    Ok(GuidelineDocument {
        doc_id: document_id(source, &metadata.source_uri),
        title: metadata.title.clone(),
        issuing_org: metadata.issuing_org.trim().to_string(),
        physiological_system: metadata.physiological_system.clone(),
        source_uri: metadata.source_uri.clone(),
        raw_text: text.to_string(),
        ingested_at: Utc::now(),
    })
}

fn read(path: &Path) -> Result<Vec<u8>, CorpusError> {
    fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Loads `path` and its `<stem>.json` sidecar.
pub fn load_document_file(path: &Path) -> Result<GuidelineDocument, CorpusError> {
    let sidecar = path.with_extension("json");
    let meta_bytes = read(&sidecar)?;
    let metadata: DocumentMetadata = serde_json::from_slice(&meta_bytes)
        .map_err(|e| CorpusError::Metadata { path: sidecar.clone(), message: e.to_string() })?;
    load_document(&read(path)?, &metadata)
}

/// Loads every `.md` / `.txt` file in `dir` (sorted by file name).
pub fn load_corpus(dir: &Path) -> Result<Vec<GuidelineDocument>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
        let path = entry.path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("md" | "txt")) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut docs: Vec<GuidelineDocument> = Vec::with_capacity(paths.len());
    for path in paths {
        let doc = load_document_file(&path)?;
        if let Some(prev) = docs.iter().find(|d| d.doc_id == doc.doc_id) {
            return Err(CorpusError::DuplicateDocument {
                doc_id: doc.doc_id,
                first: prev.source_uri.clone(),
                second: doc.source_uri,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DocumentMetadata {
        DocumentMetadata {
            title: "Thyroid function testing".into(),
            issuing_org: "American Thyroid Association".into(),
            physiological_system: SystemTag::new("Endocrine"),
            source_uri: "fixture://endocrine_ata.md".into(),
        }
    }

    #[test]
    fn empty_body_is_rejected() {
        assert!(matches!(load_document(b"", &meta()), Err(CorpusError::EmptyDocument { .. })));
        assert!(matches!(load_document(b" \n\t", &meta()), Err(CorpusError::EmptyDocument { .. })));
    }

    #[test]
    fn invalid_utf8_is_rejected() {
        let err = load_document(b"TSH \xff\xfe", &meta()).unwrap_err();
        assert!(matches!(err, CorpusError::Encoding { valid_up_to: 4, .. }));
    }

    #[test]
    fn id_is_content_hash() {
        let a = load_document(b"# TSH\n2-10 mU/L", &meta()).unwrap();
        let b = load_document(b"# TSH\n2-10 mU/L", &meta()).unwrap();
        assert_eq!(a.doc_id, b.doc_id);
        let mut m = meta();
        m.source_uri = "fixture://other.md".into();
        assert_ne!(load_document(b"# TSH\n2-10 mU/L", &m).unwrap().doc_id, a.doc_id);
        assert_ne!(load_document(b"# TSH\n2-10 mU/l", &meta()).unwrap().doc_id, a.doc_id);
    }

    #[test]
    fn blank_org_is_rejected() {
        let mut m = meta();
        m.issuing_org = "  ".into();
        assert!(matches!(load_document(b"x", &m), Err(CorpusError::Metadata { .. })));
    }
}
