use serde::{Deserialize, Serialize};

use crate::ontology::ParsedValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleStatus {
    Candidate,
    Aligned,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAttribute {
    pub name: String,
    pub raw_value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed_value: Option<ParsedValue>,
}

impl CandidateAttribute {
    pub fn new(name: &str, raw_value: &str) -> Self {
        CandidateAttribute { name: name.to_string(), raw_value: raw_value.to_string(), parsed_value: None }
    }
}

/// One extracted assertion. Attributes describe the subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTriple {
    pub subject_mention: String,
    pub subject_type: String,
    pub relation: String,
    pub object_mention: String,
    pub object_type: String,
    #[serde(default)]
    pub attributes: Vec<CandidateAttribute>,
    /// Chunk ids the model cited.
    pub provenance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_confidence: Option<f64>,
    pub status: TripleStatus,
}

impl CandidateTriple {
    pub fn new(
        subject: (&str, &str),
        relation: &str,
        object: (&str, &str),
        provenance: &[&str],
    ) -> Self {
        CandidateTriple {
            subject_mention: subject.0.to_string(),
            subject_type: subject.1.to_string(),
            relation: relation.to_string(),
            object_mention: object.0.to_string(),
            object_type: object.1.to_string(),
            attributes: Vec::new(),
            provenance: provenance.iter().map(|p| p.to_string()).collect(),
            model_confidence: None,
            status: TripleStatus::Candidate,
        }
    }

    /// `subject (Type) -[relation]-> object (Type)`.
    pub fn render(&self) -> String {
        format!(
            "{} ({}) -[{}]-> {} ({})",
            self.subject_mention, self.subject_type, self.relation, self.object_mention, self.object_type
        )
    }
}
