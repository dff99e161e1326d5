use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{CandidateAttribute, CandidateTriple, TripleStatus};

const REQUIRED: [&str; 7] = ["subject", "subject_type", "relation", "object", "object_type", "attributes", "provenance"];
const OPTIONAL: [&str; 1] = ["confidence"];

/// A rejected part of a completion. `record` is the 0-based array index when
/// the failure is local to one record; `line` and `column` locate JSON syntax
/// errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    pub message: String,
}

impl ParseIssue {
    fn record(i: usize, message: String) -> Self {
        ParseIssue { record: Some(i), line: None, column: None, message }
    }

    fn whole(message: String) -> Self {
        ParseIssue { record: None, line: None, column: None, message }
    }
}

/// Parses the strict output format: a JSON array of objects with string
/// fields `subject`, `subject_type`, `relation`, `object`, `object_type`, an
/// `attributes` object mapping names to string values, a non-empty
/// `provenance` array of chunk ids, and an optional `confidence` in [0, 1].
/// Never fails; bad records become issues and the rest are kept.
pub fn parse_model_output(text: &str) -> (Vec<CandidateTriple>, Vec<ParseIssue>) {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return (Vec::new(), vec![ParseIssue::whole("empty completion".into())]);
    }
    let value: Value = match serde_json::from_str(trimmed) {
        Ok(v) => v,
        Err(e) => {
            return (
                Vec::new(),
                vec![ParseIssue { record: None, line: Some(e.line()), column: Some(e.column()), message: format!("not JSON: {e}") }],
            )
        }
    };
    let Value::Array(records) = value else {
        return (Vec::new(), vec![ParseIssue::whole("top level must be an array of records".into())]);
    };
    let mut out = Vec::new();
    let mut issues = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        match parse_record(rec) {
            Ok(t) => out.push(t),
            Err(m) => issues.push(ParseIssue::record(i, m)),
        }
    }
    (out, issues)
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Result<String, String> {
    match &obj[key] {
        Value::String(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Value::String(_) => Err(format!("key {key:?} is empty")),
        other => Err(format!("key {key:?} must be a string, got {}", kind(other))),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn parse_record(rec: &Value) -> Result<CandidateTriple, String> {
    let Value::Object(obj) = rec else {
        return Err(format!("record must be an object, got {}", kind(rec)));
    };
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !obj.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(format!("missing key(s): {}", missing.join(", ")));
    }
    if let Some(extra) = obj.keys().find(|k| !REQUIRED.contains(&k.as_str()) && !OPTIONAL.contains(&k.as_str())) {
        return Err(format!("unknown key {extra:?}"));
    }
    let Value::Object(attrs) = &obj["attributes"] else {
        return Err(format!("key \"attributes\" must be an object, got {}", kind(&obj["attributes"])));
    };
    let mut attributes = Vec::with_capacity(attrs.len());
    for (name, v) in attrs {
        match v {
            Value::String(s) => attributes.push(CandidateAttribute::new(name, s.trim())),
            other => return Err(format!("attribute {name:?} must be a string, got {}", kind(other))),
        }
    }
    let Value::Array(prov) = &obj["provenance"] else {
        return Err(format!("key \"provenance\" must be an array, got {}", kind(&obj["provenance"])));
    };
    let provenance = prov
        .iter()
        .map(|p| p.as_str().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()))
        .collect::<Option<Vec<String>>>()
        .ok_or("provenance entries must be non-empty strings")?;
    if provenance.is_empty() {
        return Err("provenance is empty".into());
    }
    let model_confidence = match obj.get("confidence") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => match n.as_f64() {
            Some(c) if (0.0..=1.0).contains(&c) => Some(c),
            _ => return Err(format!("confidence {n} is outside [0, 1]")),
        },
        Some(other) => return Err(format!("confidence must be a number, got {}", kind(other))),
    };
    Ok(CandidateTriple {
        subject_mention: string_field(obj, "subject")?,
        subject_type: string_field(obj, "subject_type")?,
        relation: string_field(obj, "relation")?,
        object_mention: string_field(obj, "object")?,
        object_type: string_field(obj, "object_type")?,
        attributes,
        provenance,
        model_confidence,
        status: TripleStatus::Candidate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"[
      {"subject": "HDL", "subject_type": "ClinicalIndicator", "relation": "indicates_risk_of",
       "object": "Coronary heart disease", "object_type": "Disease",
       "attributes": {"reference_range": "Male: >40 mg/dL Female: >50 mg/dL"}, "provenance": ["doc-1#0000"]},
      {"subject": "HDL", "subject_type": "ClinicalIndicator", "relation": "associated_with",
       "object": "Obesity", "object_type": "Disease", "attributes": {}, "provenance": ["doc-1#0000"], "confidence": 0.7}
    ]"#;

    #[test]
    fn well_formed() {
        let (c, issues) = parse_model_output(TWO);
        assert_eq!((c.len(), issues.len()), (2, 0));
        assert_eq!(c[0].attributes[0].raw_value, "Male: >40 mg/dL Female: >50 mg/dL");
        assert_eq!(c[1].model_confidence, Some(0.7));
        assert!(c.iter().all(|t| t.status == TripleStatus::Candidate));
    }

    #[test]
    fn missing_relation() {
        let text = TWO.replacen(r#""relation": "associated_with","#, "", 1);
        let (c, issues) = parse_model_output(&text);
        assert_eq!((c.len(), issues.len()), (1, 1));
        assert_eq!(issues[0].record, Some(1));
        assert!(issues[0].message.contains("relation"));
    }

    #[test]
    fn prose_and_empty() {
        let (c, issues) = parse_model_output("HDL is a marker of coronary risk.");
        assert_eq!((c.len(), issues.len()), (0, 1));
        assert_eq!(issues[0].line, Some(1));
        let (c, issues) = parse_model_output("  \n");
        assert_eq!((c.len(), issues.len()), (0, 1));
        let (c, issues) = parse_model_output(r#"{"subject": "x"}"#);
        assert_eq!((c.len(), issues.len()), (0, 1));
    }

    #[test]
    fn strictness() {
        let bad = [
            TWO.replacen(r#""confidence": 0.7"#, r#""confidence": 1.5"#, 1),
            TWO.replacen(r#""confidence": 0.7"#, r#""score": 0.7"#, 1),
            TWO.replacen(r#""provenance": ["doc-1#0000"], "confidence""#, r#""provenance": [], "confidence""#, 1),
            TWO.replacen(r#""object": "Obesity""#, r#""object": " ""#, 1),
            TWO.replacen(r#""attributes": {}"#, r#""attributes": {"prevalence": 12}"#, 1),
        ];
        for text in &bad {
            let (c, issues) = parse_model_output(text);
            assert_eq!((c.len(), issues.len()), (1, 1), "{text}");
        }
    }
}
