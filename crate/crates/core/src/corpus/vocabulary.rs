use std::fs;
use std::path::Path;

use super::CorpusError;
use crate::tsv;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabularyEntry {
    /// `vocab:<n>`, where n is the 1-based record number in the file.
    pub id: String,
    pub canonical: String,
    pub aliases: Vec<String>,
}

/// Alias map from `canonical<TAB>alias1<TAB>alias2...` records.
///
/// Matching is case-insensitive on whole words; the canonical form itself is
/// also a surface form, so differently-cased spellings are unified too.
#[derive(Debug, Clone, Default)]
pub struct ControlledVocabulary {
    entries: Vec<VocabularyEntry>,
    /// (surface, entry index), longest surface first.
    surfaces: Vec<(String, usize)>,
}

impl ControlledVocabulary {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (n, rec) in tsv::records(text).enumerate() {
            let canonical = rec.fields[0];
            if canonical.is_empty() {
                return Err(CorpusError::Vocabulary { line: rec.line, message: "empty canonical form".into() });
            }
            let aliases: Vec<String> =
                rec.fields[1..].iter().filter(|a| !a.is_empty()).map(|a| a.to_string()).collect();
            entries.push(VocabularyEntry { id: format!("vocab:{}", n + 1), canonical: canonical.to_string(), aliases });
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text =
            fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn from_entries(entries: Vec<VocabularyEntry>) -> Self {
        let mut surfaces: Vec<(String, usize)> = Vec::new();
        for (i, e) in entries.iter().enumerate() {
            for s in std::iter::once(&e.canonical).chain(&e.aliases) {
                if !surfaces.iter().any(|(x, _)| x.to_lowercase() == s.to_lowercase()) {
                    surfaces.push((s.clone(), i));
                }
            }
        }
        surfaces.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        ControlledVocabulary { entries, surfaces }
    }

    pub fn entries(&self) -> &[VocabularyEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical entry for a whole surface form (case-insensitive).
    pub fn lookup(&self, surface: &str) -> Option<&VocabularyEntry> {
        let folded = surface.trim().to_lowercase();
        self.surfaces.iter().find(|(s, _)| s.to_lowercase() == folded).map(|(_, i)| &self.entries[*i])
    }

    /// Longest surface form starting exactly at the beginning of `text` and
    /// ending on a word boundary. Returns the entry and bytes consumed.
    pub(crate) fn match_at(&self, text: &str) -> Option<(&VocabularyEntry, usize)> {
        for (surface, idx) in &self.surfaces {
            if let Some(len) = prefix_len_ci(text, surface) {
                let next = text[len..].chars().next();
                if !next.is_some_and(|c| c.is_alphanumeric()) {
                    return Some((&self.entries[*idx], len));
                }
            }
        }
        None
    }
}

/// If `text` starts with `prefix` ignoring case, the byte length of that
/// prefix within `text`.
fn prefix_len_ci(text: &str, prefix: &str) -> Option<usize> {
    let mut t = text.char_indices();
    for pc in prefix.chars() {
        let (_, tc) = t.next()?;
        if tc != pc && !tc.to_lowercase().eq(pc.to_lowercase()) {
            return None;
        }
    }
    Some(t.next().map(|(i, _)| i).unwrap_or(text.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let v = ControlledVocabulary::parse("# c\tаliases\nThyroid Stimulating Hormone\tTSH\tthyrotropin\n").unwrap();
        assert_eq!(v.entries().len(), 1);
        assert_eq!(v.entries()[0].id, "vocab:1");
        assert_eq!(v.lookup("tsh").unwrap().canonical, "Thyroid Stimulating Hormone");
        assert_eq!(v.lookup("THYROTROPIN").unwrap().canonical, "Thyroid Stimulating Hormone");
    }

    #[test]
    fn longest_match_first_on_word_boundaries() {
        let v = ControlledVocabulary::parse("High-density lipoprotein\tHDL\tHDL-C\nLDL\n").unwrap();
        let (e, n) = v.match_at("HDL-C level").unwrap();
        assert_eq!((e.canonical.as_str(), n), ("High-density lipoprotein", 5));
        let (_, n) = v.match_at("hdl, low").unwrap();
        assert_eq!(n, 3);
        assert!(v.match_at("HDLX").is_none());
    }

    #[test]
    fn case_insensitive_prefix() {
        assert_eq!(prefix_len_ci("Ärger x", "ärger"), Some("Ärger".len()));
        assert_eq!(prefix_len_ci("ab", "abc"), None);
    }
}
