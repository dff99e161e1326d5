use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::attributes::{
    display_value, equivalent, integrate_attributes, resolve_conflict, standardize, to_attribute_value, winning_value,
    IncomingAttribute,
};
use super::{clean_mention, fold_mention, normalize_mention, AliasTable, CanonicalEntity, SourcePriority};
use crate::corpus::{GuidelineDocument, SystemTag};
use crate::extraction::{CandidateTriple, ExtractionBatch, TripleStatus};
use crate::graph::{union_provenance, Edge, EdgeStatus, ExtractorId, GraphError, GraphStore, KnowledgeGraph, Node, Provenance, Resolution};
use crate::ontology::{
    check_graph_constraints, map_external_codes, parse_attribute_value, CodeLookup, OntologySchema, ParsedValue, Violation,
    LITERAL,
};
use crate::range::UnitTable;
use crate::retrieval::IndexedChunk;

pub const UNKNOWN_ORG: &str = "unknown";

/// An aligned triple and the extractor that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionItem {
    pub triple: CandidateTriple,
    pub extractor: ExtractorId,
}

impl FusionItem {
    pub fn from_batch(batch: &ExtractionBatch) -> Vec<FusionItem> {
        let extractor = batch.extractor();
        batch.aligned.iter().map(|t| FusionItem { triple: t.clone(), extractor: extractor.clone() }).collect()
    }
}

/// Issuing organisation and body system per document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceCatalog {
    docs: BTreeMap<String, (String, SystemTag)>,
}

impl SourceCatalog {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a GuidelineDocument>) -> Self {
        let mut c = SourceCatalog::default();
        for d in docs {
            c.insert(&d.doc_id, &d.issuing_org, d.physiological_system.clone());
        }
        c
    }

    pub fn insert(&mut self, doc_id: &str, issuing_org: &str, system: SystemTag) {
        self.docs.insert(doc_id.to_string(), (issuing_org.to_string(), system));
    }

    pub fn org(&self, doc_id: &str) -> Option<&str> {
        self.docs.get(doc_id).map(|(o, _)| o.as_str())
    }

    pub fn system(&self, doc_id: &str) -> Option<&SystemTag> {
        self.docs.get(doc_id).map(|(_, s)| s)
    }
}

/// Read-only inputs to a fusion run.
#[derive(Clone, Copy)]
pub struct FusionContext<'a> {
    pub schema: &'a OntologySchema,
    pub aliases: &'a AliasTable,
    pub priority: &'a SourcePriority,
    pub codes: &'a CodeLookup,
    pub catalog: &'a SourceCatalog,
    pub units: &'a UnitTable,
}

/// Owned counterpart of [`FusionContext`] for long-lived services.
#[derive(Debug, Clone)]
pub struct FusionResources {
    pub schema: OntologySchema,
    pub aliases: AliasTable,
    pub priority: SourcePriority,
    pub codes: CodeLookup,
    pub catalog: SourceCatalog,
    pub units: UnitTable,
}

impl FusionResources {
    pub fn context(&self) -> FusionContext<'_> {
        FusionContext {
            schema: &self.schema,
            aliases: &self.aliases,
            priority: &self.priority,
            codes: &self.codes,
            catalog: &self.catalog,
            units: &self.units,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Added a node, edge, value or provenance entry.
    Merged,
    /// Everything it carried was already known.
    Duplicate,
    /// Lost a rule-based conflict, or touches a retracted element.
    Superseded,
    /// Its value sits in a conflict awaiting expert review.
    Escalated,
    /// Not aligned to the schema; nothing was written.
    Unaligned,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMerge {
    pub entity_type: String,
    pub label: String,
    pub mentions: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionReport {
    pub input_count: usize,
    pub merged_count: usize,
    pub duplicates_removed: usize,
    pub superseded_count: usize,
    pub escalated_count: usize,
    pub unaligned_count: usize,
    pub conflicts_resolved: usize,
    pub conflicts_escalated: usize,
    /// One per input item, in input order.
    pub dispositions: Vec<Disposition>,
    /// Entities touched, with the mentions that resolved to them.
    pub entities: BTreeMap<String, EntityMerge>,
    /// Candidate edges created or given new evidence; these need review.
    pub candidate_edges: Vec<String>,
    /// New or changed conflicts awaiting an expert.
    pub escalated_conflicts: Vec<String>,
    /// Documents cited but missing from the catalog.
    pub unknown_documents: BTreeSet<String>,
    /// Constraint check over the whole graph after fusion.
    pub violations: Vec<Violation>,
}

impl FusionReport {
    /// Every input has exactly one disposition and the counters agree.
    pub fn reconciles(&self) -> bool {
        let count = |d: Disposition| self.dispositions.iter().filter(|x| **x == d).count();
        self.dispositions.len() == self.input_count
            && self.input_count
                == self.merged_count + self.duplicates_removed + self.superseded_count + self.escalated_count + self.unaligned_count
            && count(Disposition::Merged) == self.merged_count
            && count(Disposition::Duplicate) == self.duplicates_removed
            && count(Disposition::Superseded) == self.superseded_count
            && count(Disposition::Escalated) == self.escalated_count
            && count(Disposition::Unaligned) == self.unaligned_count
    }
}

/// A triple with canonical entities and resolved provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedTriple {
    pub subject: CanonicalEntity,
    pub relation: String,
    /// None for attribute-form triples.
    pub object: Option<CanonicalEntity>,
    /// Standardized value text for attribute-form triples.
    pub literal: Option<String>,
    pub attributes: Vec<IncomingAttribute>,
    pub provenance: Vec<Provenance>,
    /// Input positions merged into this triple, ascending.
    pub sources: Vec<usize>,
    /// Cleaned surface forms seen for each end.
    pub subject_mentions: BTreeSet<String>,
    pub object_mentions: BTreeSet<String>,
}

impl NormalizedTriple {
    pub fn key(&self) -> (String, String, String) {
        let object = match (&self.object, &self.literal) {
            (Some(o), _) => o.entity_id.clone(),
            (None, Some(l)) => format!("{LITERAL}:{}", fold_mention(l)),
            (None, None) => format!("{LITERAL}:"),
        };
        (self.subject.entity_id.clone(), self.relation.clone(), object)
    }
}

/// Merges triples with equal (subject, relation, object) keys. Provenance
/// and attributes are unioned; output keeps first-occurrence order.
pub fn dedupe(triples: Vec<NormalizedTriple>) -> Vec<NormalizedTriple> {
    let mut out: Vec<NormalizedTriple> = Vec::new();
    let mut at: BTreeMap<(String, String, String), usize> = BTreeMap::new();
    for t in triples {
        match at.get(&t.key()) {
            Some(&i) => {
                let kept = &mut out[i];
                union_provenance(&mut kept.provenance, t.provenance);
                merge_entity(&mut kept.subject, t.subject);
                if let (Some(a), Some(b)) = (kept.object.as_mut(), t.object) {
                    merge_entity(a, b);
                }
                kept.subject_mentions.extend(t.subject_mentions);
                kept.object_mentions.extend(t.object_mentions);
                kept.attributes.extend(t.attributes);
                kept.sources.extend(t.sources);
                kept.sources.sort_unstable();
            }
            None => {
                at.insert(t.key(), out.len());
                out.push(t);
            }
        }
    }
    out
}

// Same label rule as a graph node merge, so grouping order cannot leak into labels.
fn merge_entity(kept: &mut CanonicalEntity, other: CanonicalEntity) {
    let take = match (kept.provisional, other.provisional) {
        (true, false) => true,
        (false, true) => false,
        _ => other.label < kept.label,
    };
    if take {
        kept.label = other.label;
    }
    kept.provisional &= other.provisional;
    kept.aliases.extend(other.aliases);
    kept.external_codes.extend(other.external_codes);
    kept.external_codes.sort();
    kept.external_codes.dedup();
}

fn provenance_for(item: &FusionItem, catalog: &SourceCatalog, unknown: &mut BTreeSet<String>) -> Vec<Provenance> {
    let mut out = Vec::new();
    for chunk in &item.triple.provenance {
        let doc = IndexedChunk::doc_of(chunk);
        let org = catalog.org(doc).unwrap_or_else(|| {
            unknown.insert(doc.to_string());
            UNKNOWN_ORG
        });
        out.push(Provenance {
            doc_id: doc.to_string(),
            chunk_id: chunk.clone(),
            issuing_org: org.to_string(),
            extractor: item.extractor.clone(),
            review_decision_id: None,
        });
    }
    union_provenance(&mut out, []);
    out
}

fn entity(mention: &str, entity_type: &str, ctx: &FusionContext) -> CanonicalEntity {
    let mut e = map_external_codes(normalize_mention(mention, entity_type, ctx.aliases), ctx.codes);
    e.aliases.insert(clean_mention(mention));
    e
}

/// Normalizes one aligned item. Returns None for unaligned input.
pub fn normalize_item(index: usize, item: &FusionItem, ctx: &FusionContext, unknown: &mut BTreeSet<String>) -> Option<NormalizedTriple> {
    let t = &item.triple;
    if t.status != TripleStatus::Aligned {
        return None;
    }
    let provenance = provenance_for(item, ctx.catalog, unknown);
    let attributes: Vec<IncomingAttribute> = t
        .attributes
        .iter()
        .filter_map(|a| {
            a.parsed_value.clone().map(|value| IncomingAttribute { name: a.name.clone(), value, provenance: provenance.clone() })
        })
        .collect();
    let (object, literal) = match ctx.schema.attribute_for_relation(&t.relation) {
        Some(def) => {
            let value = attributes.iter().find(|a| a.name == def.name).map(|a| a.value.clone()).unwrap_or(ParsedValue::Text(t.object_mention.clone()));
            (None, Some(display_value(&to_attribute_value(&value, Vec::new()))))
        }
        None => (Some(entity(&t.object_mention, &t.object_type, ctx)), None),
    };
    Some(NormalizedTriple {
        subject: entity(&t.subject_mention, &t.subject_type, ctx),
        relation: t.relation.clone(),
        object,
        literal,
        attributes,
        provenance,
        sources: vec![index],
        subject_mentions: BTreeSet::from([clean_mention(&t.subject_mention)]),
        object_mentions: BTreeSet::from([clean_mention(&t.object_mention)]),
    })
}

fn node_for(e: &CanonicalEntity, system: Option<SystemTag>) -> Node {
    let mut n = Node::new(&e.entity_id, &e.entity_type, &e.label);
    n.aliases = e.aliases.clone();
    n.external_codes = e.external_codes.clone();
    n.provisional = e.provisional;
    n.system_tag = system;
    n
}

fn is_new_evidence(incoming: &[Provenance], known: &[Provenance]) -> bool {
    incoming.iter().any(|p| !known.iter().any(|k| k.same_source(p)))
}

/// Normalize, dedupe, integrate attributes, resolve conflicts. New edges
/// enter as candidates; an edge's existing status is never changed, so a
/// rejected triple stays retracted. Fusing the same batch twice leaves the
/// graph unchanged, and the order of `items` does not affect the result.
pub fn fuse(graph: &mut KnowledgeGraph, items: &[FusionItem], ctx: &FusionContext) -> Result<FusionReport, GraphError> {
    let mut report = FusionReport { input_count: items.len(), ..Default::default() };
    let mut dispositions: Vec<Option<Disposition>> = vec![None; items.len()];
    let mut normalized = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match normalize_item(i, item, ctx, &mut report.unknown_documents) {
            Some(n) => normalized.push(n),
            None => dispositions[i] = Some(Disposition::Unaligned),
        }
    }
    let groups = dedupe(normalized);
    let set_group = |dispositions: &mut Vec<Option<Disposition>>, g: &NormalizedTriple, lead: Disposition| {
        for (k, &src) in g.sources.iter().enumerate() {
            dispositions[src] = Some(if k == 0 { lead } else { Disposition::Duplicate });
        }
    };

    // subject id -> (incoming value, attribute-form group index)
    let mut incoming: BTreeMap<String, Vec<(IncomingAttribute, Option<usize>)>> = BTreeMap::new();
    let mut candidate_edges = BTreeSet::new();
    for (gi, g) in groups.iter().enumerate() {
        let blocked = [Some(&g.subject), g.object.as_ref()]
            .into_iter()
            .flatten()
            .any(|e| graph.node(&e.entity_id).is_some_and(|n| n.retracted));
        if blocked {
            set_group(&mut dispositions, g, Disposition::Superseded);
            continue;
        }
        for (e, mentions) in [(Some(&g.subject), &g.subject_mentions), (g.object.as_ref(), &g.object_mentions)] {
            if let Some(e) = e {
                let m = report.entities.entry(e.entity_id.clone()).or_default();
                m.entity_type = e.entity_type.clone();
                m.mentions.extend(mentions.iter().cloned());
            }
        }
        let system = if ctx.schema.is_subtype(&g.subject.entity_type, "ClinicalIndicator") {
            g.provenance.iter().filter_map(|p| ctx.catalog.system(&p.doc_id)).min().cloned()
        } else {
            None
        };
        graph.upsert_node(node_for(&g.subject, system));
        match &g.object {
            Some(object) => {
                graph.upsert_node(node_for(object, None));
                let new = graph
                    .edge_for(&g.subject.entity_id, &g.relation, &object.entity_id)
                    .is_none_or(|e| is_new_evidence(&g.provenance, &e.provenance));
                let edge = Edge::candidate(&g.subject.entity_id, &g.relation, &object.entity_id, g.provenance.clone());
                let id = edge.edge_id.clone();
                graph.upsert_edge(edge)?;
                if new && graph.edge(&id).is_some_and(|e| e.status == EdgeStatus::Candidate) {
                    candidate_edges.insert(id);
                }
                set_group(&mut dispositions, g, if new { Disposition::Merged } else { Disposition::Duplicate });
                for a in &g.attributes {
                    incoming.entry(g.subject.entity_id.clone()).or_default().push((a.clone(), None));
                }
            }
            None => {
                let name = ctx.schema.attribute_for_relation(&g.relation).map(|d| d.name.clone()).unwrap_or_default();
                for a in &g.attributes {
                    let lead = (a.name == name).then_some(gi);
                    incoming.entry(g.subject.entity_id.clone()).or_default().push((a.clone(), lead));
                }
            }
        }
    }

    let mut escalated = BTreeSet::new();
    for (subject, values) in incoming {
        let node = graph.node(&subject).expect("upserted above").clone();
        let known = |graph: &KnowledgeGraph, name: &str| {
            let mut k: Vec<Provenance> = node.attributes.get(name).map(|v| v.provenance.clone()).unwrap_or_default();
            for c in graph.conflicts().filter(|c| c.subject == subject && c.attribute == name) {
                for ct in &c.contenders {
                    k.extend(ct.provenance.iter().cloned());
                }
            }
            k
        };
        let known_before: BTreeMap<String, Vec<Provenance>> =
            values.iter().map(|(a, _)| (a.name.clone(), known(graph, &a.name))).collect();
        let plain: Vec<IncomingAttribute> = values.iter().map(|(a, _)| a.clone()).collect();
        let integration = integrate_attributes(&node, &plain, ctx.schema, ctx.units);
        let mut outcome: BTreeMap<String, Resolution> = BTreeMap::new();
        for (name, v) in integration.merged {
            graph.set_attribute(&subject, &name, v)?;
        }
        for c in integration.conflicts {
            let def = ctx.schema.attribute(&c.attribute).expect("integrated attribute exists");
            let before = graph.conflict(&c.conflict_id).cloned();
            graph.upsert_conflict(resolve_conflict(c.clone(), ctx.priority))?;
            let after = graph.conflict(&c.conflict_id).expect("just upserted").clone();
            if before.as_ref() != Some(&after) {
                if after.is_escalated() {
                    report.conflicts_escalated += 1;
                    escalated.insert(after.conflict_id.clone());
                } else {
                    report.conflicts_resolved += 1;
                }
            }
            if let Some(v) = winning_value(&after, def) {
                graph.set_attribute(&subject, &after.attribute, v)?;
            }
            outcome.insert(after.attribute.clone(), after.resolution.clone());
        }
        let stored = graph.node(&subject).expect("exists").attributes.clone();
        for (a, lead) in &values {
            let Some(gi) = lead else { continue };
            let g = &groups[*gi];
            if !is_new_evidence(&g.provenance, &known_before[&a.name]) {
                set_group(&mut dispositions, g, Disposition::Duplicate);
                continue;
            }
            let def = ctx.schema.attribute(&a.name).expect("known attribute");
            let lead_disposition = match outcome.get(&a.name) {
                None => Disposition::Merged,
                Some(Resolution::Escalated { .. }) => Disposition::Escalated,
                Some(Resolution::Resolved { .. }) => {
                    let mine = standardize(def, &a.value, ctx.units).unwrap_or_else(|_| a.value.clone());
                    let won = stored
                        .get(&a.name)
                        .and_then(|v| parse_attribute_value(def, &display_value(v)).ok())
                        .is_some_and(|winner| equivalent(&winner, &mine, ctx.units));
                    if won {
                        Disposition::Merged
                    } else {
                        Disposition::Superseded
                    }
                }
            };
            set_group(&mut dispositions, g, lead_disposition);
        }
    }

    for d in &dispositions {
        match d.expect("every input has a disposition") {
            Disposition::Merged => report.merged_count += 1,
            Disposition::Duplicate => report.duplicates_removed += 1,
            Disposition::Superseded => report.superseded_count += 1,
            Disposition::Escalated => report.escalated_count += 1,
            Disposition::Unaligned => report.unaligned_count += 1,
        }
    }
    report.dispositions = dispositions.into_iter().map(|d| d.expect("set")).collect();
    for (id, m) in report.entities.iter_mut() {
        m.label = graph.node(id).map(|n| n.label.clone()).unwrap_or_default();
    }
    report.candidate_edges = candidate_edges.into_iter().collect();
    report.escalated_conflicts = escalated.into_iter().collect();
    report.violations = check_graph_constraints(ctx.schema, graph);
    Ok(report)
}

/// Runs [`fuse`] as one write transaction on the store.
pub fn fuse_into_store(store: &GraphStore, items: &[FusionItem], ctx: &FusionContext) -> Result<FusionReport, GraphError> {
    store.write(|g| fuse(g, items, ctx))
}
