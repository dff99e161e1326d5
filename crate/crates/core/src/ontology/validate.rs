use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AttributeDef, ConstraintKind, OntologySchema, ValueKind, LITERAL};
use crate::decimal::Decimal;
use crate::extraction::CandidateTriple;
use crate::graph::{EdgeStatus, KnowledgeGraph, Node};
use crate::range::{parse_reference_range, Quantity, ReferenceRange, UnitTable};

/// A typed attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedValue {
    Number { value: Decimal, unit: Option<String> },
    Range(ReferenceRange),
    Token(String),
    Text(String),
}

impl fmt::Display for ParsedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedValue::Number { value, unit: Some(u) } => write!(f, "{value} {u}"),
            ParsedValue::Number { value, unit: None } => write!(f, "{value}"),
            ParsedValue::Range(r) => write!(f, "{r}"),
            ParsedValue::Token(t) | ParsedValue::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyMention { role: String },
    MissingProvenance,
    /// Cited chunk was not among those shown to the model.
    UnknownChunk { chunk_id: String },
    UnknownRelation { relation: String },
    UnknownEntityType { entity_type: String },
    DomainMismatch { relation: String, subject_type: String, expected: Vec<String> },
    RangeMismatch { relation: String, object_type: String, expected: Vec<String> },
    UnknownAttribute { attribute: String },
    AttributeKind { attribute: String, expected: ValueKind, detail: String },
    RequiredLink { rule_id: String, node: String, relation: String, object_type: String, found: usize, min: u32, max: Option<u32> },
    Cardinality { rule_id: String, node: String, relation: String, found: usize, min: Option<u32>, max: Option<u32> },
    AttributeRequired { rule_id: String, node: String, attribute: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyMention { role } => write!(f, "empty {role} mention"),
            Violation::MissingProvenance => write!(f, "no provenance chunk cited"),
            Violation::UnknownChunk { chunk_id } => write!(f, "cited chunk {chunk_id} was not retrieved"),
            Violation::UnknownRelation { relation } => write!(f, "unknown relation {relation:?}"),
            Violation::UnknownEntityType { entity_type } => write!(f, "unknown entity type {entity_type:?}"),
            Violation::DomainMismatch { relation, subject_type, expected } => {
                write!(f, "domain mismatch: {relation} takes {} as subject, got {subject_type}", expected.join(" | "))
            }
            Violation::RangeMismatch { relation, object_type, expected } => {
                write!(f, "range mismatch: {relation} takes {} as object, got {object_type}", expected.join(" | "))
            }
            Violation::UnknownAttribute { attribute } => write!(f, "unknown attribute {attribute:?}"),
            Violation::AttributeKind { attribute, expected, detail } => {
                write!(f, "attribute {attribute} is not a valid {expected}: {detail}")
            }
            Violation::RequiredLink { rule_id, node, relation, object_type, found, min, .. } => write!(
                f,
                "{rule_id}: {node} has {found} {relation} link(s) to {object_type}, needs at least {min}"
            ),
            Violation::Cardinality { rule_id, node, relation, found, min, max } => {
                write!(f, "{rule_id}: {node} has {found} asserted {relation} edge(s), allowed ")?;
                match (min, max) {
                    (Some(lo), Some(hi)) => write!(f, "{lo}..={hi}"),
                    (Some(lo), None) => write!(f, ">= {lo}"),
                    (None, Some(hi)) => write!(f, "<= {hi}"),
                    (None, None) => write!(f, "any"),
                }
            }
            Violation::AttributeRequired { rule_id, node, attribute } => {
                write!(f, "{rule_id}: {node} lacks attribute {attribute}")
            }
        }
    }
}

/// Splits `"12.5 mg/dL"` into a decimal and an optional unit.
fn split_number(raw: &str) -> Option<(Decimal, Option<&str>)> {
    let raw = raw.trim();
    let end = raw
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && c == '-')))
        .map(|(i, _)| i)
        .unwrap_or(raw.len());
    let value: Decimal = raw[..end].parse().ok()?;
    let unit = raw[end..].trim();
    Some((value, (!unit.is_empty()).then_some(unit)))
}

/// Parses `raw` according to the attribute's kind.
pub fn parse_attribute_value(def: &AttributeDef, raw: &str) -> Result<ParsedValue, String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err("empty value".into());
    }
    match def.value_kind {
        ValueKind::ReferenceRange => parse_reference_range(trimmed).map(ParsedValue::Range).map_err(|e| e.to_string()),
        ValueKind::Numeric => {
            let (value, unit) = split_number(trimmed).ok_or_else(|| format!("{trimmed:?} is not a number"))?;
            if let (Some(declared), Some(given)) = (&def.unit, unit) {
                let units = UnitTable::builtin();
                let q = Quantity::new(value, units.unit(given));
                if given != declared && units.convert(&q, declared).is_none() {
                    return Err(format!("unit {given:?} does not convert to {declared:?}"));
                }
            }
            Ok(ParsedValue::Number { value, unit: unit.map(str::to_string) })
        }
        ValueKind::Categorical => {
            let allowed = def.allowed_values.as_deref().unwrap_or_default();
            allowed
                .iter()
                .find(|v| v.eq_ignore_ascii_case(trimmed))
                .map(|v| ParsedValue::Token(v.clone()))
                .ok_or_else(|| format!("{trimmed:?} is not one of {}", allowed.join(", ")))
        }
        ValueKind::Text => Ok(ParsedValue::Text(trimmed.to_string())),
    }
}

fn check_attribute(schema: &OntologySchema, name: &str, raw: &str, out: &mut Vec<Violation>) {
    match schema.attribute(name) {
        None => out.push(Violation::UnknownAttribute { attribute: name.to_string() }),
        Some(def) => {
            if let Err(detail) = parse_attribute_value(def, raw) {
                out.push(Violation::AttributeKind { attribute: name.to_string(), expected: def.value_kind, detail });
            }
        }
    }
}

/// Checks a triple against the schema; all violations are returned.
pub fn validate_triple(schema: &OntologySchema, triple: &CandidateTriple) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    for (role, m) in [("subject", &triple.subject_mention), ("object", &triple.object_mention)] {
        if m.trim().is_empty() {
            out.push(Violation::EmptyMention { role: role.into() });
        }
    }
    let known_type = |t: &str, out: &mut Vec<Violation>| {
        let ok = schema.entity_type(t).is_some();
        if !ok {
            out.push(Violation::UnknownEntityType { entity_type: t.to_string() });
        }
        ok
    };

    if let Some(def) = schema.attribute_for_relation(&triple.relation) {
        known_type(&triple.subject_type, &mut out);
        if triple.object_type != LITERAL {
            out.push(Violation::RangeMismatch {
                relation: triple.relation.clone(),
                object_type: triple.object_type.clone(),
                expected: vec![LITERAL.into()],
            });
        }
        check_attribute(schema, &def.name, &triple.object_mention, &mut out);
    } else if let Some(rel) = schema.relation(&triple.relation) {
        if known_type(&triple.subject_type, &mut out) && !rel.domain.iter().any(|d| schema.is_subtype(&triple.subject_type, d)) {
            out.push(Violation::DomainMismatch {
                relation: rel.name.clone(),
                subject_type: triple.subject_type.clone(),
                expected: rel.domain.clone(),
            });
        }
        if known_type(&triple.object_type, &mut out) && !rel.range.iter().any(|r| schema.is_subtype(&triple.object_type, r)) {
            out.push(Violation::RangeMismatch {
                relation: rel.name.clone(),
                object_type: triple.object_type.clone(),
                expected: rel.range.clone(),
            });
        }
    } else {
        out.push(Violation::UnknownRelation { relation: triple.relation.clone() });
    }
    for a in &triple.attributes {
        check_attribute(schema, &a.name, &a.raw_value, &mut out);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn violation_key(v: &Violation) -> (String, String) {
    match v {
        Violation::RequiredLink { rule_id, node, .. }
        | Violation::Cardinality { rule_id, node, .. }
        | Violation::AttributeRequired { rule_id, node, .. } => (rule_id.clone(), node.clone()),
        other => (String::new(), other.to_string()),
    }
}

/// Every constraint rule, plus each entity type's required attributes,
/// checked over the non-retracted nodes. Ordered by (rule, node).
pub fn check_graph_constraints(schema: &OntologySchema, graph: &KnowledgeGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let live: Vec<&Node> = graph.nodes().filter(|n| !n.retracted).collect();
    for rule in &schema.constraints {
        for node in live.iter().filter(|n| schema.is_subtype(&n.entity_type, &rule.subject_type)) {
            match rule.kind {
                ConstraintKind::RequiredLink => {
                    let relation = rule.relation.as_deref().unwrap_or_default();
                    let object_type = rule.object_type.as_deref().unwrap_or_default();
                    let found = graph
                        .edges()
                        .filter(|e| e.status != EdgeStatus::Retracted && e.subject == node.entity_id && e.relation == relation)
                        .filter(|e| graph.node(&e.object).is_some_and(|o| schema.is_subtype(&o.entity_type, object_type)))
                        .count();
                    let min = rule.min.unwrap_or(1);
                    if found < min as usize || rule.max.is_some_and(|m| found > m as usize) {
                        out.push(Violation::RequiredLink {
                            rule_id: rule.rule_id.clone(),
                            node: node.entity_id.clone(),
                            relation: relation.to_string(),
                            object_type: object_type.to_string(),
                            found,
                            min,
                            max: rule.max,
                        });
                    }
                }
                ConstraintKind::Cardinality => {
                    let relation = rule.relation.as_deref().unwrap_or_default();
                    let found = graph
                        .edges()
                        .filter(|e| e.status == EdgeStatus::Asserted && e.subject == node.entity_id && e.relation == relation)
                        .filter(|e| {
                            rule.object_type.as_deref().is_none_or(|t| {
                                graph.node(&e.object).is_some_and(|o| schema.is_subtype(&o.entity_type, t))
                            })
                        })
                        .count();
                    if rule.min.is_some_and(|m| found < m as usize) || rule.max.is_some_and(|m| found > m as usize) {
                        out.push(Violation::Cardinality {
                            rule_id: rule.rule_id.clone(),
                            node: node.entity_id.clone(),
                            relation: relation.to_string(),
                            found,
                            min: rule.min,
                            max: rule.max,
                        });
                    }
                }
                ConstraintKind::AttributeRequired => {
                    let attribute = rule.attribute.as_deref().unwrap_or_default();
                    if !node.attributes.contains_key(attribute) {
                        out.push(Violation::AttributeRequired {
                            rule_id: rule.rule_id.clone(),
                            node: node.entity_id.clone(),
                            attribute: attribute.to_string(),
                        });
                    }
                }
            }
        }
    }
    for node in &live {
        for t in schema.lineage(&node.entity_type) {
            for attribute in schema.entity_type(t).map(|d| d.required_attributes.as_slice()).unwrap_or_default() {
                if !node.attributes.contains_key(attribute) {
                    out.push(Violation::AttributeRequired {
                        rule_id: format!("{t}.required_attributes"),
                        node: node.entity_id.clone(),
                        attribute: attribute.clone(),
                    });
                }
            }
        }
    }
    out.sort_by_key(violation_key);
    out
}
