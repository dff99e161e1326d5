use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ExtractionError;
use crate::ontology::OntologySchema;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionIntent {
    pub intent_id: String,
    #[serde(default)]
    pub target_entity_types: BTreeSet<String>,
    /// Relation names, including attribute forms such as `has_reference_range`.
    #[serde(default)]
    pub target_relations: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_indicator: Option<String>,
    /// Text embedded for retrieval.
    pub query_text: String,
}

impl ExtractionIntent {
    pub fn check(&self, schema: &OntologySchema) -> Result<(), ExtractionError> {
        if self.query_text.trim().is_empty() {
            return Err(ExtractionError::Intent(format!("{}: empty query text", self.intent_id)));
        }
        if let Some(t) = self.target_entity_types.iter().find(|t| schema.entity_type(t).is_none()) {
            return Err(ExtractionError::Intent(format!("{}: unknown entity type {t}", self.intent_id)));
        }
        if let Some(r) = self
            .target_relations
            .iter()
            .find(|r| schema.relation(r).is_none() && schema.attribute_for_relation(r).is_none())
        {
            return Err(ExtractionError::Intent(format!("{}: unknown relation {r}", self.intent_id)));
        }
        Ok(())
    }
}

/// The text substituted for `{intent}`.
impl fmt::Display for ExtractionIntent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |s: &BTreeSet<String>| if s.is_empty() { "any".to_string() } else { s.iter().cloned().collect::<Vec<_>>().join(", ") };
        writeln!(f, "Extract facts about: {}", self.query_text.trim())?;
        writeln!(f, "Entity types: {}", list(&self.target_entity_types))?;
        write!(f, "Relations: {}", list(&self.target_relations))?;
        if let Some(focus) = &self.focus_indicator {
            write!(f, "\nFocus indicator: {focus}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intent() -> ExtractionIntent {
        ExtractionIntent {
            intent_id: "lipids".into(),
            target_entity_types: ["ClinicalIndicator".to_string(), "Disease".to_string()].into(),
            target_relations: ["indicates_risk_of".to_string(), "has_reference_range".to_string()].into(),
            focus_indicator: Some("HDL".into()),
            query_text: "HDL cholesterol reference range".into(),
        }
    }

    #[test]
    fn known_names_pass() {
        assert!(intent().check(OntologySchema::builtin()).is_ok());
    }

    #[test]
    fn unknown_names_fail() {
        let mut i = intent();
        i.target_relations.insert("cures".into());
        assert!(matches!(i.check(OntologySchema::builtin()), Err(ExtractionError::Intent(m)) if m.contains("cures")));
        let mut i = intent();
        i.target_entity_types.insert("Gene".into());
        assert!(i.check(OntologySchema::builtin()).is_err());
    }

    #[test]
    fn rendering() {
        assert_eq!(
            intent().to_string(),
            "Extract facts about: HDL cholesterol reference range\nEntity types: ClinicalIndicator, Disease\nRelations: has_reference_range, indicates_risk_of\nFocus indicator: HDL"
        );
    }
}
