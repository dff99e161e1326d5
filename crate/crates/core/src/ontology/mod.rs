//! Entity, relation and attribute schema plus graph-level constraints.
//!
//! Attribute values travel as triples too: `(subject, has_<attribute>, value)`
//! with object type [`LITERAL`]. Relation domain and range checks use
//! subsumption, so a subject whose type descends from a listed type passes.

mod codes;
mod validate;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use codes::{map_external_codes, CodeLookup, CodeSystem, ExternalCodeRef, LookupError};
pub use validate::{check_graph_constraints, parse_attribute_value, validate_triple, ParsedValue, Violation};

/// Pseudo entity type of attribute-value objects.
pub const LITERAL: &str = "Literal";
/// Prefix of attribute-form relations, e.g. `has_reference_range`.
pub const ATTRIBUTE_RELATION_PREFIX: &str = "has_";

const DEFAULT_SCHEMA: &str = include_str!("../../data/schema.json");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema does not parse: {0}")]
    Parse(String),
    #[error("{location}: unknown name {name:?}")]
    Dangling { name: String, location: String },
    #[error("{location}: duplicate name {name:?}")]
    Duplicate { name: String, location: String },
    #[error("entity type hierarchy has a cycle: {}", path.join(" -> "))]
    Cycle { path: Vec<String> },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("schema version {next} does not increase on {current}")]
    VersionNotIncreasing { current: String, next: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Dotted numeric version, compared component-wise (`1.10 > 1.9`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SchemaVersion(Vec<u64>);

impl FromStr for SchemaVersion {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Result<Vec<u64>, _> = s.trim().split('.').map(str::parse).collect();
        match parts {
            Ok(p) if !p.is_empty() => Ok(SchemaVersion(p)),
            _ => Err(SchemaError::Invalid { location: "version".into(), message: format!("bad version {s:?}") }),
        }
    }
}

impl Ord for SchemaVersion {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.0.len().max(other.0.len());
        (0..n)
            .map(|i| self.0.get(i).copied().unwrap_or(0).cmp(&other.0.get(i).copied().unwrap_or(0)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for SchemaVersion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SchemaVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join("."))
    }
}

impl Serialize for SchemaVersion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SchemaVersion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTypeDef {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub required_attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTypeDef {
    pub name: String,
    pub domain: Vec<String>,
    pub range: Vec<String>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Numeric,
    ReferenceRange,
    Categorical,
    Text,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Numeric => "numeric",
            ValueKind::ReferenceRange => "reference_range",
            ValueKind::Categorical => "categorical",
            ValueKind::Text => "text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub unit: Option<String>,
    #[serde(default)]
    pub allowed_values: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Every node of `subject_type` has at least `min` (default 1)
    /// non-retracted `relation` edges to an `object_type` node.
    RequiredLink,
    /// Asserted `relation` edges per `subject_type` node lie in `[min, max]`.
    Cardinality,
    /// Every node of `subject_type` carries `attribute`.
    AttributeRequired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRule {
    pub rule_id: String,
    pub kind: ConstraintKind,
    pub subject_type: String,
    #[serde(default)]
    pub relation: Option<String>,
    #[serde(default)]
    pub object_type: Option<String>,
    #[serde(default)]
    pub attribute: Option<String>,
    #[serde(default)]
    pub min: Option<u32>,
    #[serde(default)]
    pub max: Option<u32>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologySchema {
    pub version: SchemaVersion,
    pub entity_types: Vec<EntityTypeDef>,
    pub relation_types: Vec<RelationTypeDef>,
    pub attributes: Vec<AttributeDef>,
    pub constraints: Vec<ConstraintRule>,
}

/// Reads and checks a schema file.
pub fn load_schema(path: &Path) -> Result<OntologySchema, SchemaError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SchemaError::Io { path: path.display().to_string(), message: e.to_string() })?;
    OntologySchema::from_json(&text)
}

impl OntologySchema {
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        if text.trim().is_empty() {
            return Err(SchemaError::Parse("empty schema".into()));
        }
        let schema: OntologySchema = serde_json::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// The schema shipped in `data/schema.json`.
    pub fn builtin() -> &'static OntologySchema {
        static SCHEMA: OnceLock<OntologySchema> = OnceLock::new();
        SCHEMA.get_or_init(|| OntologySchema::from_json(DEFAULT_SCHEMA).expect("shipped schema is valid"))
    }

    /// Accepts `next` as an edit of `self` only if it is valid and its
    /// version is strictly greater.
    pub fn revise(&self, next: OntologySchema) -> Result<OntologySchema, SchemaError> {
        if next.version <= self.version {
            return Err(SchemaError::VersionNotIncreasing {
                current: self.version.to_string(),
                next: next.version.to_string(),
            });
        }
        next.check()?;
        Ok(next)
    }

    /// Uniqueness, referential closure and an acyclic hierarchy.
    pub fn check(&self) -> Result<(), SchemaError> {
        fn unique<'a>(names: impl Iterator<Item = &'a str>, what: &str) -> Result<BTreeSet<&'a str>, SchemaError> {
            let mut seen = BTreeSet::new();
            for (i, n) in names.enumerate() {
                if n.trim().is_empty() {
                    return Err(SchemaError::Invalid { location: format!("{what}[{i}].name"), message: "empty name".into() });
                }
                if !seen.insert(n) {
                    return Err(SchemaError::Duplicate { name: n.into(), location: format!("{what}[{i}].name") });
                }
            }
            Ok(seen)
        }
        let types = unique(self.entity_types.iter().map(|t| t.name.as_str()), "entity_types")?;
        let relations = unique(self.relation_types.iter().map(|r| r.name.as_str()), "relation_types")?;
        let attrs = unique(self.attributes.iter().map(|a| a.name.as_str()), "attributes")?;
        unique(self.constraints.iter().map(|c| c.rule_id.as_str()), "constraints")?;
        if types.contains(LITERAL) {
            return Err(SchemaError::Invalid { location: "entity_types".into(), message: format!("{LITERAL} is reserved") });
        }
        let need = |set: &BTreeSet<&str>, name: &str, location: String| -> Result<(), SchemaError> {
            if set.contains(name) {
                Ok(())
            } else {
                Err(SchemaError::Dangling { name: name.into(), location })
            }
        };

        for (i, t) in self.entity_types.iter().enumerate() {
            if let Some(p) = &t.parent {
                need(&types, p, format!("entity_types[{i}].parent"))?;
            }
            for (j, a) in t.required_attributes.iter().enumerate() {
                need(&attrs, a, format!("entity_types[{i}].required_attributes[{j}]"))?;
            }
        }
        for (i, r) in self.relation_types.iter().enumerate() {
            for (field, list) in [("domain", &r.domain), ("range", &r.range)] {
                if list.is_empty() {
                    return Err(SchemaError::Invalid {
                        location: format!("relation_types[{i}].{field}"),
                        message: "must name at least one entity type".into(),
                    });
                }
                for (j, t) in list.iter().enumerate() {
                    need(&types, t, format!("relation_types[{i}].{field}[{j}]"))?;
                }
            }
        }
        for (i, a) in self.attributes.iter().enumerate() {
            if a.value_kind == ValueKind::Categorical && a.allowed_values.as_ref().is_none_or(|v| v.is_empty()) {
                return Err(SchemaError::Invalid {
                    location: format!("attributes[{i}].allowed_values"),
                    message: "categorical attribute needs allowed_values".into(),
                });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let loc = |f: &str| format!("constraints[{i}].{f}");
            need(&types, &c.subject_type, loc("subject_type"))?;
            if let Some(o) = &c.object_type {
                need(&types, o, loc("object_type"))?;
            }
            if let Some(r) = &c.relation {
                need(&relations, r, loc("relation"))?;
            }
            if let Some(a) = &c.attribute {
                need(&attrs, a, loc("attribute"))?;
            }
            let missing = |f: &str| SchemaError::Invalid { location: loc(f), message: format!("{:?} rule needs {f}", c.kind) };
            match c.kind {
                ConstraintKind::RequiredLink => {
                    c.relation.as_ref().ok_or_else(|| missing("relation"))?;
                    c.object_type.as_ref().ok_or_else(|| missing("object_type"))?;
                }
                ConstraintKind::Cardinality => {
                    c.relation.as_ref().ok_or_else(|| missing("relation"))?;
                    if c.min.is_none() && c.max.is_none() {
                        return Err(missing("min or max"));
                    }
                }
                ConstraintKind::AttributeRequired => {
                    c.attribute.as_ref().ok_or_else(|| missing("attribute"))?;
                }
            }
            if let (Some(lo), Some(hi)) = (c.min, c.max) {
                if lo > hi {
                    return Err(SchemaError::Invalid { location: loc("min"), message: format!("min {lo} > max {hi}") });
                }
            }
        }

        let parents: BTreeMap<&str, &str> =
            self.entity_types.iter().filter_map(|t| t.parent.as_deref().map(|p| (t.name.as_str(), p))).collect();
        for t in &self.entity_types {
            let mut path = vec![t.name.as_str()];
            let mut at = t.name.as_str();
            while let Some(&p) = parents.get(at) {
                if let Some(pos) = path.iter().position(|x| *x == p) {
                    let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                    cycle.push(p.to_string());
                    return Err(SchemaError::Cycle { path: cycle });
                }
                path.push(p);
                at = p;
            }
        }
        Ok(())
    }

    pub fn entity_type(&self, name: &str) -> Option<&EntityTypeDef> {
        self.entity_types.iter().find(|t| t.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationTypeDef> {
        self.relation_types.iter().find(|r| r.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// `name` followed by its ancestors, nearest first.
    pub fn lineage<'a>(&'a self, name: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut at = Some(name);
        while let Some(t) = at {
            if out.contains(&t) {
                break;
            }
            out.push(t);
            at = self.entity_type(t).and_then(|d| d.parent.as_deref());
        }
        out
    }

    /// True when `name` is `ancestor` or descends from it.
    pub fn is_subtype(&self, name: &str, ancestor: &str) -> bool {
        self.entity_type(name).is_some() && self.lineage(name).contains(&ancestor)
    }

    /// Attribute named by an attribute-form relation such as `has_prevalence`.
    pub fn attribute_for_relation(&self, relation: &str) -> Option<&AttributeDef> {
        relation.strip_prefix(ATTRIBUTE_RELATION_PREFIX).and_then(|a| self.attribute(a))
    }

    /// Plain-text listing of types, relations and attribute kinds for prompts.
    pub fn summary(&self) -> String {
        self.summary_for(&[], &[])
    }

    /// Like [`OntologySchema::summary`], restricted to the named types and
    /// relations. An empty filter keeps everything; attributes are always listed.
    pub fn summary_for(&self, types: &[&str], relations: &[&str]) -> String {
        let mut out = String::new();
        out.push_str("Entity types:\n");
        for t in self.entity_types.iter().filter(|t| types.is_empty() || types.contains(&t.name.as_str())) {
            match &t.parent {
                Some(p) => out.push_str(&format!("- {} (a kind of {p})\n", t.name)),
                None => out.push_str(&format!("- {}\n", t.name)),
            }
        }
        out.push_str("Relations:\n");
        for r in self.relation_types.iter().filter(|r| relations.is_empty() || relations.contains(&r.name.as_str())) {
            out.push_str(&format!("- {}: {} -> {}\n", r.name, r.domain.join(" | "), r.range.join(" | ")));
        }
        out.push_str(&format!("Attributes (relation has_<name>, object_type {LITERAL}):\n"));
        for a in &self.attributes {
            out.push_str(&format!("- {}: {}", a.name, a.value_kind));
            if let Some(u) = &a.unit {
                out.push_str(&format!(" in {u}"));
            }
            if let Some(v) = &a.allowed_values {
                out.push_str(&format!(" one of {}", v.join(", ")));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shipped_schema_loads() {
        let s = OntologySchema::builtin();
        assert_eq!(s.entity_types.len(), 8);
        assert_eq!(s.relation_types.len(), 8);
        assert_eq!(s.attributes.len(), 5);
        assert_eq!(s.constraints.len(), 2);
        assert!(s.is_subtype("RehabilitationIndicator", "ClinicalIndicator"));
        assert!(!s.is_subtype("ClinicalIndicator", "RehabilitationIndicator"));
        assert!(s.is_subtype("DiagnosticProcedure", "ClinicalProcedure"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(OntologySchema::from_json(""), Err(SchemaError::Parse(_))));
        assert!(matches!(OntologySchema::from_json("  \n"), Err(SchemaError::Parse(_))));
    }

    #[test]
    fn dangling_domain() {
        let mut s = OntologySchema::builtin().clone();
        s.relation_types[0].domain.push("Gene".into());
        let err = OntologySchema::from_json(&s.to_json()).unwrap_err();
        assert!(matches!(err, SchemaError::Dangling { ref name, ref location } if name == "Gene" && location.starts_with("relation_types[0].domain")));
    }

    #[test]
    fn cycle_is_reported() {
        let mut s = OntologySchema::builtin().clone();
        let disease = s.entity_types.iter().position(|t| t.name == "Disease").unwrap();
        let med = s.entity_types.iter().position(|t| t.name == "Medication").unwrap();
        s.entity_types[disease].parent = Some("Medication".into());
        s.entity_types[med].parent = Some("Disease".into());
        assert!(matches!(s.check(), Err(SchemaError::Cycle { .. })));
    }

    #[test]
    fn min_above_max() {
        let mut s = OntologySchema::builtin().clone();
        s.constraints[0].min = Some(3);
        s.constraints[0].max = Some(2);
        assert!(matches!(s.check(), Err(SchemaError::Invalid { .. })));
    }

    #[test]
    fn versions_compare_numerically() {
        let v = |s: &str| s.parse::<SchemaVersion>().unwrap();
        assert!(v("1.10") > v("1.9"));
        assert_eq!(v("1.0"), v("1.0"));
        assert_eq!(v("2").cmp(&v("2.0")), Ordering::Equal);
        assert!("1.x".parse::<SchemaVersion>().is_err());
        let s = OntologySchema::builtin();
        let mut next = s.clone();
        assert!(s.revise(next.clone()).is_err());
        next.version = v("1.1.0");
        assert!(s.revise(next).is_ok());
    }

    #[test]
    fn summary_lists_names() {
        let text = OntologySchema::builtin().summary();
        assert!(text.contains("- indicates_risk_of: ClinicalIndicator -> Disease"));
        assert!(text.contains("- reference_range: reference_range"));
    }

    /// Which definitions can be removed from the shipped schema: every one
    /// that something else refers to.
    #[derive(Debug, Clone)]
    enum Removal {
        EntityType(usize),
        Relation(usize),
        Attribute(usize),
    }

    fn referenced(s: &OntologySchema, r: &Removal) -> bool {
        let text = s.to_json();
        let name = match r {
            Removal::EntityType(i) => &s.entity_types[*i].name,
            Removal::Relation(i) => &s.relation_types[*i].name,
            Removal::Attribute(i) => &s.attributes[*i].name,
        };
        text.matches(&format!("\"{name}\"")).count() > 1
    }

    proptest! {
        #[test]
        fn deleting_a_referenced_definition_fails(pick in 0usize..21) {
            let s = OntologySchema::builtin().clone();
            let removal = if pick < 8 {
                Removal::EntityType(pick)
            } else if pick < 16 {
                Removal::Relation(pick - 8)
            } else {
                Removal::Attribute(pick - 16)
            };
            let is_referenced = referenced(&s, &removal);
            let mut t = s.clone();
            match removal {
                Removal::EntityType(i) => { t.entity_types.remove(i); }
                Removal::Relation(i) => { t.relation_types.remove(i); }
                Removal::Attribute(i) => { t.attributes.remove(i); }
            }
            prop_assert_eq!(OntologySchema::from_json(&t.to_json()).is_err(), is_referenced);
        }
    }
}
