use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal::Decimal;
use crate::tsv;

const DEFAULT_QUALIFIERS: &str = include_str!("../../data/qualifiers.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Children,
    Adult,
    Postmenopausal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeriodUnit {
    Hour,
    Day,
}

impl PeriodUnit {
    pub fn symbol(self) -> &'static str {
        match self {
            PeriodUnit::Hour => "h",
            PeriodUnit::Day => "d",
        }
    }
}

/// A collection window such as "24 h" (urine collected over a day).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Period {
    pub amount: Decimal,
    pub unit: PeriodUnit,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount, self.unit.symbol())
    }
}

/// One population or measurement condition a stratum applies to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Qualifier {
    Sex(Sex),
    Age(AgeGroup),
    Condition(String),
    Period(Period),
}

/// A conjunction of qualifiers; a keyword maps to one or more of these
/// (e.g. "Male or non-pregnant female" is two alternatives).
pub type Alternative = Vec<Qualifier>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QualifierTableError {
    #[error("line {line}: expected `label<TAB>qualifiers`")]
    Malformed { line: usize },
    #[error("line {line}: unknown qualifier {text:?}")]
    UnknownQualifier { line: usize, text: String },
    #[error("line {line}: alternative has more than one {kind} qualifier")]
    Repeated { line: usize, kind: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QualifierKeyword {
    pub label: String,
    pub alternatives: Vec<Alternative>,
}

/// Closed keyword table used to recognize stratum labels ("Male:",
/// "Postmenopausal women:"). Extend it with [`QualifierTable::extend_from_tsv`].
#[derive(Debug, Clone, Default)]
pub struct QualifierTable {
    keywords: Vec<QualifierKeyword>,
}

impl QualifierTable {
    pub fn builtin() -> &'static QualifierTable {
        static TABLE: OnceLock<QualifierTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let mut t = QualifierTable::default();
            t.extend_from_tsv(DEFAULT_QUALIFIERS).expect("shipped qualifier table is valid");
            t
        })
    }

    pub fn extend_from_tsv(&mut self, text: &str) -> Result<(), QualifierTableError> {
        for rec in tsv::records(text) {
            let [label, spec] = rec.fields[..] else {
                return Err(QualifierTableError::Malformed { line: rec.line });
            };
            if label.is_empty() || spec.is_empty() {
                return Err(QualifierTableError::Malformed { line: rec.line });
            }
            let alternatives = spec
                .split('|')
                .map(|alt| parse_alternative(alt, rec.line))
                .collect::<Result<Vec<_>, _>>()?;
            self.insert(label, alternatives);
        }
        Ok(())
    }

    pub fn insert(&mut self, label: &str, alternatives: Vec<Alternative>) {
        self.keywords.retain(|k| !k.label.eq_ignore_ascii_case(label));
        self.keywords.push(QualifierKeyword { label: label.to_string(), alternatives });
        // Longest label first so "Male or non-pregnant female" wins over "Male".
        self.keywords
            .sort_by(|a, b| b.label.len().cmp(&a.label.len()).then_with(|| a.label.cmp(&b.label)));
    }

    pub fn keywords(&self) -> &[QualifierKeyword] {
        &self.keywords
    }

    pub fn lookup(&self, label: &str) -> Option<&QualifierKeyword> {
        self.keywords.iter().find(|k| k.label.eq_ignore_ascii_case(label))
    }

    /// Keyword that `text` starts with (case-insensitive, whole words).
    pub(crate) fn match_prefix(&self, text: &str) -> Option<&QualifierKeyword> {
        self.keywords.iter().find(|k| {
            let n = k.label.len();
            text.len() >= n
                && text.is_char_boundary(n)
                && text[..n].eq_ignore_ascii_case(&k.label)
                && !text[n..].chars().next().is_some_and(|c| c.is_alphanumeric())
        })
    }
}

fn parse_alternative(alt: &str, line: usize) -> Result<Alternative, QualifierTableError> {
    let mut out = Vec::new();
    let (mut sex, mut age) = (false, false);
    for part in alt.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let unknown = || QualifierTableError::UnknownQualifier { line, text: part.to_string() };
        let (key, value) = part.split_once('=').ok_or_else(unknown)?;
        let q = match (key.trim(), value.trim()) {
            ("sex", "male") => Qualifier::Sex(Sex::Male),
            ("sex", "female") => Qualifier::Sex(Sex::Female),
            ("age", "children") => Qualifier::Age(AgeGroup::Children),
            ("age", "adult") => Qualifier::Age(AgeGroup::Adult),
            ("age", "postmenopausal") => Qualifier::Age(AgeGroup::Postmenopausal),
            ("condition", v) if !v.is_empty() => Qualifier::Condition(v.to_lowercase()),
            _ => return Err(unknown()),
        };
        match q {
            Qualifier::Sex(_) if std::mem::replace(&mut sex, true) => {
                return Err(QualifierTableError::Repeated { line, kind: "sex" })
            }
            Qualifier::Age(_) if std::mem::replace(&mut age, true) => {
                return Err(QualifierTableError::Repeated { line, kind: "age" })
            }
            _ => {}
        }
        out.push(q);
    }
    if out.is_empty() {
        return Err(QualifierTableError::Malformed { line });
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_table_forms() {
        let t = QualifierTable::builtin();
        for label in ["Male", "Female", "Children", "Postmenopausal women", "Male or non-pregnant female"] {
            assert!(t.lookup(label).is_some(), "{label}");
        }
        let hcg = t.lookup("male or non-pregnant female").unwrap();
        assert_eq!(hcg.alternatives.len(), 2);
    }

    #[test]
    fn longest_keyword_wins() {
        let t = QualifierTable::builtin();
        let k = t.match_prefix("Male or non-pregnant female: <5 IU/L").unwrap();
        assert_eq!(k.label, "Male or non-pregnant female");
        assert_eq!(t.match_prefix("Male: 3.0").unwrap().label, "Male");
        assert!(t.match_prefix("Males: 3").is_none());
    }

    #[test]
    fn rejects_repeated_sex() {
        let mut t = QualifierTable::default();
        let err = t.extend_from_tsv("X\tsex=male,sex=female").unwrap_err();
        assert_eq!(err, QualifierTableError::Repeated { line: 1, kind: "sex" });
    }

    #[test]
    fn extension_adds_keywords() {
        let mut t = QualifierTable::builtin().clone();
        t.extend_from_tsv("Pregnant women\tsex=female,condition=pregnant").unwrap();
        assert!(t.match_prefix("pregnant women: <10").is_some());
    }
}
