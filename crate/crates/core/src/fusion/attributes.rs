use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SourcePriority;
use crate::graph::{union_provenance, AttributeValue, Conflict, Contender, Node, Provenance, Resolution};
use crate::ontology::{parse_attribute_value, AttributeDef, OntologySchema, ParsedValue};
use crate::range::{Bound, Quantity, ReferenceRange, UnitTable};

/// One value arriving for a node attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncomingAttribute {
    pub name: String,
    pub value: ParsedValue,
    pub provenance: Vec<Provenance>,
}

/// Stored form of a parsed value.
pub fn to_attribute_value(value: &ParsedValue, provenance: Vec<Provenance>) -> AttributeValue {
    let (value, unit) = match value {
        ParsedValue::Number { value, unit } => (value.normalized().to_string(), unit.clone()),
        ParsedValue::Range(r) => (r.render(), None),
        ParsedValue::Token(t) | ParsedValue::Text(t) => (t.clone(), None),
    };
    let mut out = AttributeValue { value, unit, provenance: Vec::new() };
    union_provenance(&mut out.provenance, provenance);
    out
}

/// Text of a stored value, as contender values and for reparsing.
pub fn display_value(v: &AttributeValue) -> String {
    match &v.unit {
        Some(u) => format!("{} {u}", v.value),
        None => v.value.clone(),
    }
}

/// Converts numbers to the attribute's declared unit. The error names a
/// unit that does not convert.
pub fn standardize(def: &AttributeDef, value: &ParsedValue, units: &UnitTable) -> Result<ParsedValue, String> {
    match (value, &def.unit) {
        (ParsedValue::Number { value: v, unit: Some(given) }, Some(declared)) if given != declared => {
            let q = Quantity::new(*v, units.unit(given));
            match units.convert(&q, declared) {
                Some(c) => Ok(ParsedValue::Number { value: c.value.normalized(), unit: Some(declared.clone()) }),
                None => Err(format!("unit {given} does not convert to {declared}")),
            }
        }
        (ParsedValue::Number { value: v, unit }, _) => Ok(ParsedValue::Number { value: v.normalized(), unit: unit.clone() }),
        _ => Ok(value.clone()),
    }
}

fn first_quantity(b: &Bound) -> Option<&Quantity> {
    match b {
        Bound::ClosedInterval { lo, .. } => Some(lo),
        Bound::LessThan { limit } | Bound::GreaterThan { limit } => Some(limit),
        Bound::Compound { components } => components.iter().find_map(|(_, b)| first_quantity(b)),
        Bound::Qualitative { .. } => None,
    }
}

fn range_quantity(r: &ReferenceRange) -> Option<&Quantity> {
    r.strata().iter().find_map(|s| first_quantity(&s.bound))
}

/// Values are unequal but can still be compared on one scale.
fn comparable(a: &ParsedValue, b: &ParsedValue, units: &UnitTable) -> bool {
    let q = |x: &Quantity, y: &Quantity| x.unit.is_dimensionless() && y.unit.is_dimensionless() || units.commensurate(x, y).is_some();
    match (a, b) {
        (ParsedValue::Range(x), ParsedValue::Range(y)) => match (range_quantity(x), range_quantity(y)) {
            (Some(qx), Some(qy)) => q(qx, qy),
            _ => true,
        },
        (ParsedValue::Number { value: va, unit: ua }, ParsedValue::Number { value: vb, unit: ub }) => {
            let qa = Quantity::new(*va, ua.as_deref().map_or_else(crate::range::Unit::dimensionless, |u| units.unit(u)));
            let qb = Quantity::new(*vb, ub.as_deref().map_or_else(crate::range::Unit::dimensionless, |u| units.unit(u)));
            q(&qa, &qb)
        }
        _ => true,
    }
}

/// Equal after unit conversion.
pub fn equivalent(a: &ParsedValue, b: &ParsedValue, units: &UnitTable) -> bool {
    match (a, b) {
        (ParsedValue::Range(x), ParsedValue::Range(y)) => x == y || x.equivalent(y, units),
        (ParsedValue::Number { value: va, unit: ua }, ParsedValue::Number { value: vb, unit: ub }) => {
            if ua == ub {
                return va == vb;
            }
            match (ua, ub) {
                (Some(ua), Some(ub)) => units
                    .commensurate(&Quantity::new(*va, units.unit(ua)), &Quantity::new(*vb, units.unit(ub)))
                    .is_some_and(|(x, y)| x == y),
                _ => false,
            }
        }
        (ParsedValue::Token(x), ParsedValue::Token(y)) | (ParsedValue::Text(x), ParsedValue::Text(y)) => {
            x.trim().eq_ignore_ascii_case(y.trim())
        }
        _ => false,
    }
}

struct Member {
    value: ParsedValue,
    display: String,
    provenance: Vec<Provenance>,
    flaw: Option<String>,
    existing: bool,
}

/// Equivalence classes of the values for one attribute, and the conflict
/// when there is more than one class. The conflict's resolution is left
/// escalated for [`resolve_conflict`] to fill in.
fn integrate_one(
    node: &Node,
    def: &AttributeDef,
    incoming: &[&IncomingAttribute],
    units: &UnitTable,
) -> (Option<AttributeValue>, Option<Conflict>) {
    let mut members: Vec<Member> = Vec::new();
    if let Some(stored) = node.attributes.get(&def.name) {
        let text = display_value(stored);
        let (value, flaw) = match parse_attribute_value(def, &text) {
            Ok(v) => (v, None),
            Err(e) => (ParsedValue::Text(text.clone()), Some(format!("stored value does not parse: {e}"))),
        };
        members.push(Member { value, display: text, provenance: stored.provenance.clone(), flaw, existing: true });
    }
    for inc in incoming {
        let (value, flaw) = match standardize(def, &inc.value, units) {
            Ok(v) => (v, None),
            Err(e) => (inc.value.clone(), Some(e)),
        };
        let display = display_value(&to_attribute_value(&value, Vec::new()));
        members.push(Member { value, display, provenance: inc.provenance.clone(), flaw, existing: false });
    }
    if members.is_empty() {
        return (None, None);
    }
    // Stored value first, then by text, so class representatives do not
    // depend on arrival order.
    members.sort_by(|a, b| b.existing.cmp(&a.existing).then_with(|| a.display.cmp(&b.display)));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, m) in members.iter().enumerate() {
        match classes.iter_mut().find(|c| m.flaw.is_none() && members[c[0]].flaw.is_none() && equivalent(&members[c[0]].value, &m.value, units)) {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    let class_provenance = |c: &[usize]| {
        let mut p = Vec::new();
        for &i in c {
            union_provenance(&mut p, members[i].provenance.iter().cloned());
        }
        p
    };
    if classes.len() == 1 {
        let rep = &members[classes[0][0]];
        return (Some(to_attribute_value(&rep.value, class_provenance(&classes[0]))), None);
    }
    let mut contenders: Vec<Contender> = Vec::new();
    for (ci, c) in classes.iter().enumerate() {
        let rep = &members[c[0]];
        let mut flaw = rep.flaw.clone();
        if flaw.is_none() {
            if let Some((_, other)) = classes.iter().enumerate().find(|(oi, o)| *oi != ci && !comparable(&rep.value, &members[o[0]].value, units)) {
                flaw = Some(format!("units of {} are not commensurate with {}", rep.display, members[other[0]].display));
            }
        }
        let mut by_org: BTreeMap<String, Vec<Provenance>> = BTreeMap::new();
        for p in class_provenance(c) {
            by_org.entry(p.issuing_org.clone()).or_default().push(p);
        }
        for (org, provenance) in by_org {
            contenders.push(Contender { value: rep.display.clone(), issuing_org: org, provenance, flaw: flaw.clone() });
        }
    }
    let mut conflict = Conflict {
        conflict_id: Conflict::id_for(&node.entity_id, &def.name, &contenders),
        subject: node.entity_id.clone(),
        attribute: def.name.clone(),
        contenders,
        resolution: Resolution::Escalated { rationale: "unresolved".into() },
    };
    conflict.canonicalize();
    (None, Some(conflict))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Integration {
    /// Attributes whose values all agree, with merged provenance.
    pub merged: BTreeMap<String, AttributeValue>,
    /// One per attribute with disagreeing values; resolution not yet set.
    pub conflicts: Vec<Conflict>,
}

/// Merges incoming values with the node's stored attributes. Values equal
/// after unit conversion merge; any disagreement on an attribute becomes a
/// conflict. Unknown attribute names are ignored.
pub fn integrate_attributes(node: &Node, incoming: &[IncomingAttribute], schema: &OntologySchema, units: &UnitTable) -> Integration {
    let mut by_name: BTreeMap<&str, Vec<&IncomingAttribute>> = BTreeMap::new();
    for inc in incoming {
        by_name.entry(inc.name.as_str()).or_default().push(inc);
    }
    let mut out = Integration::default();
    for (name, values) in by_name {
        let Some(def) = schema.attribute(name) else { continue };
        match integrate_one(node, def, &values, units) {
            (Some(v), _) => {
                out.merged.insert(name.to_string(), v);
            }
            (None, Some(c)) => out.conflicts.push(c),
            (None, None) => {}
        }
    }
    out
}

/// Picks the contender from the highest-ranked organisation. A tie at the
/// top rank between different values escalates, as does a conflict in which
/// every contender is flawed. Flawed contenders never win.
pub fn resolve_conflict(mut conflict: Conflict, priority: &SourcePriority) -> Conflict {
    let eligible: Vec<(usize, usize)> = conflict
        .contenders
        .iter()
        .enumerate()
        .filter(|(_, c)| c.flaw.is_none())
        .map(|(i, c)| (priority.rank(&c.issuing_org), i))
        .collect();
    let Some(best) = eligible.iter().map(|(r, _)| *r).min() else {
        conflict.resolution = Resolution::Escalated { rationale: "no contender can be compared; expert review needed".into() };
        return conflict;
    };
    let top: Vec<usize> = eligible.iter().filter(|(r, _)| *r == best).map(|(_, i)| *i).collect();
    let mut values: Vec<&str> = top.iter().map(|&i| conflict.contenders[i].value.as_str()).collect();
    values.dedup();
    let rank_text = if best == priority.default_rank() { "unlisted".to_string() } else { format!("rank {best}") };
    conflict.resolution = if values.len() == 1 {
        let winner = top[0];
        let w = &conflict.contenders[winner];
        let losers: Vec<String> = conflict
            .contenders
            .iter()
            .filter(|c| c.value != w.value)
            .map(|c| format!("{} ({})", c.issuing_org, c.flaw.as_ref().map_or_else(|| format!("rank {}", priority.rank(&c.issuing_org)), |_| "flawed".to_string())))
            .collect();
        Resolution::Resolved {
            winner,
            rationale: format!("{} ({rank_text}) outranks {}", w.issuing_org, losers.join(", ")),
        }
    } else {
        let orgs: Vec<&str> = top.iter().map(|&i| conflict.contenders[i].issuing_org.as_str()).collect();
        Resolution::Escalated { rationale: format!("tie at {rank_text} between {}", orgs.join(", ")) }
    };
    conflict
}

/// The value a resolved conflict settles on, with the provenance of every
/// contender that agrees with the winner.
pub fn winning_value(conflict: &Conflict, def: &AttributeDef) -> Option<AttributeValue> {
    let Resolution::Resolved { winner, .. } = &conflict.resolution else { return None };
    let w = conflict.contenders.get(*winner)?;
    let parsed = parse_attribute_value(def, &w.value).ok()?;
    let provenance = conflict.contenders.iter().filter(|c| c.value == w.value).flat_map(|c| c.provenance.clone()).collect();
    Some(to_attribute_value(&parsed, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::prov;

    fn units() -> &'static UnitTable {
        UnitTable::builtin()
    }

    fn schema() -> &'static OntologySchema {
        OntologySchema::builtin()
    }

    fn range(name: &str, text: &str, org: &str) -> IncomingAttribute {
        IncomingAttribute {
            name: name.into(),
            value: ParsedValue::Range(text.parse().unwrap()),
            provenance: vec![prov(&format!("doc-{org}"), &format!("doc-{org}#0000"), org)],
        }
    }

    fn node() -> Node {
        Node::new("ClinicalIndicator:x", "ClinicalIndicator", "X")
    }

    #[test]
    fn growth_hormone_units_merge() {
        let i = integrate_attributes(
            &node(),
            &[range("reference_range", "<20 µg/L", "A"), range("reference_range", "<20000 ng/L", "B")],
            schema(),
            units(),
        );
        assert!(i.conflicts.is_empty());
        let v = &i.merged["reference_range"];
        assert_eq!(v.provenance.len(), 2);
    }

    #[test]
    fn cholesterol_disagreement_conflicts() {
        let i = integrate_attributes(
            &node(),
            &[range("reference_range", "<200 mg/dL", "A"), range("reference_range", "<190 mg/dL", "B")],
            schema(),
            units(),
        );
        assert!(i.merged.is_empty());
        assert_eq!(i.conflicts.len(), 1);
        assert_eq!(i.conflicts[0].contenders.len(), 2);
    }

    #[test]
    fn single_value_merges() {
        let i = integrate_attributes(&node(), &[range("reference_range", "<5 ng/mL", "A")], schema(), units());
        assert_eq!(i.merged["reference_range"].value, "<5 ng/mL");
        assert!(i.conflicts.is_empty());
    }

    #[test]
    fn stored_value_participates() {
        let mut n = node();
        n.attributes.insert("reference_range".into(), to_attribute_value(&ParsedValue::Range("<5 ng/mL".parse().unwrap()), vec![prov("d", "d#0", "A")]));
        let same = integrate_attributes(&n, &[range("reference_range", "<5000 ng/L", "B")], schema(), units());
        assert_eq!(same.merged["reference_range"].value, "<5 ng/mL");
        let other = integrate_attributes(&n, &[range("reference_range", "<3 ng/mL", "B")], schema(), units());
        assert_eq!(other.conflicts.len(), 1);
    }

    #[test]
    fn incompatible_units_are_flawed() {
        let i = integrate_attributes(
            &node(),
            &[range("reference_range", "<200 mg/dL", "A"), range("reference_range", "<5.2 mmol/L", "B")],
            schema(),
            units(),
        );
        let c = &i.conflicts[0];
        assert!(c.contenders.iter().all(|c| c.flaw.is_some()));
        let p = SourcePriority::new(&["A", "B"]).unwrap();
        assert!(resolve_conflict(c.clone(), &p).is_escalated());
    }

    #[test]
    fn numeric_values_convert_to_declared_unit() {
        let prevalence = IncomingAttribute {
            name: "prevalence".into(),
            value: ParsedValue::Number { value: "12.50".parse().unwrap(), unit: Some("%".into()) },
            provenance: vec![prov("d", "d#0", "A")],
        };
        let i = integrate_attributes(&node(), &[prevalence], schema(), units());
        assert_eq!((i.merged["prevalence"].value.as_str(), i.merged["prevalence"].unit.as_deref()), ("12.5", Some("%")));
    }

    fn conflict(orgs: &[(&str, &str)]) -> Conflict {
        let contenders = orgs
            .iter()
            .map(|(v, o)| Contender { value: v.to_string(), issuing_org: o.to_string(), provenance: vec![prov("d", "d#0", o)], flaw: None })
            .collect::<Vec<_>>();
        let mut c = Conflict {
            conflict_id: Conflict::id_for("s", "reference_range", &contenders),
            subject: "s".into(),
            attribute: "reference_range".into(),
            contenders,
            resolution: Resolution::Escalated { rationale: String::new() },
        };
        c.canonicalize();
        c
    }

    #[test]
    fn priority_resolution() {
        let p = SourcePriority::new(&["ACS", "ESC", "ATA"]).unwrap();
        let r = resolve_conflict(conflict(&[("<190 mg/dL", "ATA"), ("<200 mg/dL", "ACS")]), &p);
        let Resolution::Resolved { winner, rationale } = &r.resolution else { panic!() };
        assert_eq!(r.contenders[*winner].issuing_org, "ACS");
        assert!(rationale.contains("ACS (rank 1)"));
        let def = schema().attribute("reference_range").unwrap();
        assert_eq!(winning_value(&r, def).unwrap().value, "<200 mg/dL");
    }

    #[test]
    fn ties_escalate() {
        let p = SourcePriority::new(&["ACS", "ESC"]).unwrap();
        assert!(resolve_conflict(conflict(&[("<190 mg/dL", "ESC"), ("<200 mg/dL", "ESC")]), &p).is_escalated());
        assert!(resolve_conflict(conflict(&[("<190 mg/dL", "WHO"), ("<200 mg/dL", "NICE")]), &p).is_escalated());
        // Only the top rank decides.
        let r = resolve_conflict(conflict(&[("<200 mg/dL", "ACS"), ("<200 mg/dL", "ACS2"), ("<190 mg/dL", "ESC")]), &SourcePriority::new(&["ACS", "ACS2", "ESC"]).unwrap());
        assert!(!r.is_escalated());
    }
}
