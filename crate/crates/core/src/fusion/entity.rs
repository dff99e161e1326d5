use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::ontology::ExternalCodeRef;
use crate::tsv;

/// Characters stripped from both ends of a mention.
const ENCLOSING: &[char] = &['"', '\'', '.', ',', ';', ':', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
const BRACKETS: [(char, char); 3] = [('(', ')'), ('[', ']'), ('{', '}')];

fn unbalanced(s: &str, open: char, close: char) -> bool {
    s.matches(open).count() != s.matches(close).count()
}

/// The opening bracket at the start closes at the very end.
fn wraps(s: &str, open: char, close: char) -> bool {
    if !s.starts_with(open) || !s.ends_with(close) || s.len() < 2 {
        return false;
    }
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        if c == open {
            depth += 1;
        } else if c == close {
            depth = depth.saturating_sub(1);
            if depth == 0 {
                return i + c.len_utf8() == s.len();
            }
        }
    }
    false
}

/// Collapses whitespace and strips enclosing punctuation, keeping case.
/// A bracket at either end goes only when it has no partner, so
/// "High-density lipoprotein (HDL)" keeps its abbreviation.
pub fn clean_mention(mention: &str) -> String {
    let mut s = mention.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let before = s.len();
        s = s.trim_matches(ENCLOSING).trim().to_string();
        for (open, close) in BRACKETS {
            if wraps(&s, open, close) {
                s = s[1..s.len() - 1].trim().to_string();
            }
            if s.starts_with(open) && unbalanced(&s, open, close) {
                s = s[1..].trim().to_string();
            }
            if s.ends_with(close) && unbalanced(&s, open, close) {
                s = s[..s.len() - 1].trim().to_string();
            }
        }
        if s.len() == before {
            return s;
        }
    }
}

/// The lookup key: the cleaned mention, lowercased.
pub fn fold_mention(mention: &str) -> String {
    clean_mention(mention).to_lowercase()
}

pub fn entity_id(entity_type: &str, label: &str) -> String {
    format!("{entity_type}:{}", fold_mention(label))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalEntity {
    pub entity_id: String,
    pub entity_type: String,
    pub label: String,
    /// Always contains `label`.
    pub aliases: BTreeSet<String>,
    pub external_codes: Vec<ExternalCodeRef>,
    pub provisional: bool,
}

impl CanonicalEntity {
    pub fn new(entity_type: &str, label: &str, provisional: bool) -> Self {
        CanonicalEntity {
            entity_id: entity_id(entity_type, label),
            entity_type: entity_type.to_string(),
            label: label.to_string(),
            aliases: BTreeSet::from([label.to_string()]),
            external_codes: Vec::new(),
            provisional,
        }
    }
}

/// Synonym table from `canonical<TAB>alias1<TAB>alias2...` records.
/// Lookup is exact on the folded form.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    /// folded surface -> canonical label
    by_surface: BTreeMap<String, String>,
    /// canonical label -> every listed surface, canonical included
    surfaces: BTreeMap<String, BTreeSet<String>>,
}

impl AliasTable {
    pub fn parse(text: &str) -> Result<Self, FusionError> {
        let mut table = AliasTable::default();
        for rec in tsv::records(text) {
            let canonical = clean_mention(rec.fields[0]);
            if canonical.is_empty() {
                return Err(FusionError::Table { line: rec.line, message: "empty canonical label".into() });
            }
            for surface in rec.fields.iter().map(|s| clean_mention(s)).filter(|s| !s.is_empty()) {
                let key = surface.to_lowercase();
                if let Some(prev) = table.by_surface.get(&key) {
                    if *prev != canonical {
                        return Err(FusionError::Table {
                            line: rec.line,
                            message: format!("{surface:?} already maps to {prev:?}"),
                        });
                    }
                }
                table.by_surface.insert(key, canonical.clone());
                table.surfaces.entry(canonical.clone()).or_default().insert(surface);
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = fs::read_to_string(path).map_err(|e| FusionError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn canonical(&self, mention: &str) -> Option<&str> {
        self.by_surface.get(&fold_mention(mention)).map(String::as_str)
    }
}

/// Resolves a mention to its canonical entity. An alias hit yields a
/// non-provisional entity carrying the table's surfaces; a miss yields a
/// provisional entity labelled with the cleaned mention.
pub fn normalize_mention(mention: &str, entity_type: &str, aliases: &AliasTable) -> CanonicalEntity {
    match aliases.canonical(mention) {
        Some(label) => {
            let mut e = CanonicalEntity::new(entity_type, label, false);
            e.aliases.extend(aliases.surfaces[label].iter().cloned());
            e
        }
        None => CanonicalEntity::new(entity_type, &clean_mention(mention), true),
    }
}
