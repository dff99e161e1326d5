use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CandidateAttribute, CandidateTriple, TripleStatus};
use crate::ontology::{parse_attribute_value, validate_triple, OntologySchema, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub triple: CandidateTriple,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub aligned: Vec<CandidateTriple>,
    pub rejected: Vec<Rejected>,
}

/// Validates each candidate and fills `parsed_value` on its attributes. An
/// attribute-form triple (`has_<name>`, object `Literal`) also gains the
/// attribute itself, so downstream code reads values from one place.
///
/// With `retrieved` set, provenance must cite only those chunk ids.
pub fn align_candidates(
    schema: &OntologySchema,
    candidates: Vec<CandidateTriple>,
    retrieved: Option<&BTreeSet<String>>,
) -> Alignment {
    let mut out = Alignment::default();
    for mut t in candidates {
        let mut violations = validate_triple(schema, &t).err().unwrap_or_default();
        if t.provenance.is_empty() {
            violations.push(Violation::MissingProvenance);
        }
        if let Some(known) = retrieved {
            for c in t.provenance.iter().filter(|c| !known.contains(*c)) {
                violations.push(Violation::UnknownChunk { chunk_id: c.clone() });
            }
        }
        if violations.is_empty() {
            if let Some(def) = schema.attribute_for_relation(&t.relation) {
                if !t.attributes.iter().any(|a| a.name == def.name) {
                    t.attributes.push(CandidateAttribute::new(&def.name, &t.object_mention));
                }
            }
            for a in &mut t.attributes {
                let def = schema.attribute(&a.name).expect("validated attribute");
                a.parsed_value = Some(parse_attribute_value(def, &a.raw_value).expect("validated value"));
            }
            t.status = TripleStatus::Aligned;
            out.aligned.push(t);
        } else {
            t.status = TripleStatus::Rejected;
            out.rejected.push(Rejected { triple: t, violations });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{ParsedValue, ValueKind, LITERAL};
    use crate::range::{Bound, Quantity, UnitTable};

    fn schema() -> &'static OntologySchema {
        OntologySchema::builtin()
    }

    #[test]
    fn cholesterol_range_is_parsed() {
        let t = CandidateTriple::new(("Cholesterol", "ClinicalIndicator"), "has_reference_range", ("<200 mg/dL", LITERAL), &["d#0000"]);
        let a = align_candidates(schema(), vec![t], None);
        assert_eq!(a.aligned.len(), 1);
        let t = &a.aligned[0];
        assert_eq!(t.status, TripleStatus::Aligned);
        let Some(ParsedValue::Range(r)) = &t.attributes[0].parsed_value else { panic!("{:?}", t.attributes) };
        let expected = Bound::LessThan { limit: Quantity::new("200".parse().unwrap(), UnitTable::builtin().unit("mg/dL")) };
        assert_eq!(r.strata().len(), 1);
        assert_eq!(r.strata()[0].bound, expected);
    }

    #[test]
    fn unknown_relation_rejected() {
        let t = CandidateTriple::new(("HDL", "ClinicalIndicator"), "cures", ("Obesity", "Disease"), &["d#0000"]);
        let a = align_candidates(schema(), vec![t], None);
        assert_eq!(a.rejected.len(), 1);
        assert_eq!(a.rejected[0].violations, vec![Violation::UnknownRelation { relation: "cures".into() }]);
        assert_eq!(a.rejected[0].triple.status, TripleStatus::Rejected);
    }

    #[test]
    fn unparseable_range_rejected() {
        let t = CandidateTriple::new(("CEA", "ClinicalIndicator"), "has_reference_range", ("< ng/mL", LITERAL), &["d#0000"]);
        let a = align_candidates(schema(), vec![t], None);
        assert!(matches!(&a.rejected[0].violations[0], Violation::AttributeKind { expected: ValueKind::ReferenceRange, .. }));
    }

    #[test]
    fn provenance_must_be_retrieved() {
        let known: BTreeSet<String> = ["d#0000".to_string()].into();
        let ok = CandidateTriple::new(("HDL", "ClinicalIndicator"), "associated_with", ("Obesity", "Disease"), &["d#0000"]);
        let bad = CandidateTriple::new(("HDL", "ClinicalIndicator"), "associated_with", ("Obesity", "Disease"), &["d#0000", "x#0009"]);
        let a = align_candidates(schema(), vec![ok, bad], Some(&known));
        assert_eq!((a.aligned.len(), a.rejected.len()), (1, 1));
        assert_eq!(a.rejected[0].violations, vec![Violation::UnknownChunk { chunk_id: "x#0009".into() }]);
    }

    #[test]
    fn conservation() {
        let items: Vec<CandidateTriple> = (0..30)
            .map(|i| {
                let rel = ["indicates_risk_of", "treats", "cures"][i % 3];
                CandidateTriple::new(("HDL", "ClinicalIndicator"), rel, ("Obesity", "Disease"), &["d#0000"])
            })
            .collect();
        let a = align_candidates(schema(), items, None);
        assert_eq!(a.aligned.len() + a.rejected.len(), 30);
        assert_eq!(a.aligned.len(), 10);
    }
}
