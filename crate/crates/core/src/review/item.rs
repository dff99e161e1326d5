use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::extraction::{CandidateTriple, TripleStatus};
use crate::graph::{short_hash, Conflict, Edge, KnowledgeGraph, Node};
use crate::ontology::{validate_triple, OntologySchema};

/// Generic review points shown with every item. These were written for this
/// tool; no published checklist was available to copy.
pub const CHECKLIST: [&str; 4] = [
    "Subject and object are the entities the excerpt actually names.",
    "The relation matches the excerpt: direct risk versus indirect association.",
    "Values and units match the source text exactly.",
    "The cited excerpt supports the triple without outside knowledge.",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemTarget {
    Edge { edge_id: String },
    /// An escalated attribute conflict awaiting an expert pick.
    Conflict { conflict_id: String },
}

impl ItemTarget {
    /// Deterministic, so re-enqueueing finds the same item.
    pub fn item_id(&self) -> String {
        match self {
            ItemTarget::Edge { edge_id } => format!("ri-{}", short_hash(&["edge", edge_id])),
            ItemTarget::Conflict { conflict_id } => format!("ri-{}", short_hash(&["conflict", conflict_id])),
        }
    }

    pub fn is_edge(&self) -> bool {
        matches!(self, ItemTarget::Edge { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Accepted,
    Rejected,
    Edited,
}

impl ItemStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(ItemStatus::Pending),
            "accepted" => Some(ItemStatus::Accepted),
            "rejected" => Some(ItemStatus::Rejected),
            "edited" => Some(ItemStatus::Edited),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub chunk_id: String,
    pub doc_id: String,
    pub issuing_org: String,
    /// None when the chunk is not in the loaded chunk table.
    pub text: Option<String>,
    /// Byte ranges of entity mentions within `text`, sorted and disjoint.
    pub highlights: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemContext {
    pub triple: String,
    pub excerpts: Vec<Excerpt>,
    /// Schema problems with the triple as it stands in the graph.
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict: Option<Conflict>,
    pub checklist: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub target: ItemTarget,
    pub status: ItemStatus,
    /// Starts at 1 and grows on every state change.
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_id: Option<String>,
    pub context: ItemContext,
}

/// ASCII-case-insensitive occurrences of any term, merged where they overlap.
pub fn highlight(text: &str, terms: &[&str]) -> Vec<(usize, usize)> {
    let hay = text.to_ascii_lowercase();
    let mut spans = Vec::new();
    for term in terms {
        let needle = term.trim().to_ascii_lowercase();
        if needle.is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = hay[from..].find(&needle) {
            let start = from + pos;
            spans.push((start, start + needle.len()));
            from = start + needle.len();
        }
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

fn names(node: Option<&Node>) -> Vec<&str> {
    node.map(|n| n.aliases.iter().map(String::as_str).chain([n.label.as_str()]).collect()).unwrap_or_default()
}

fn label(graph: &KnowledgeGraph, id: &str) -> String {
    graph.node(id).map_or_else(|| id.to_string(), |n| n.label.clone())
}

fn excerpts<'a>(
    provenance: impl IntoIterator<Item = &'a crate::graph::Provenance>,
    chunks: &BTreeMap<String, Chunk>,
    terms: &[&str],
) -> Vec<Excerpt> {
    let mut out: Vec<Excerpt> = Vec::new();
    for p in provenance {
        if out.iter().any(|e| e.chunk_id == p.chunk_id) {
            continue;
        }
        let text = chunks.get(&p.chunk_id).map(|c| c.text.clone());
        let highlights = text.as_deref().map(|t| highlight(t, terms)).unwrap_or_default();
        out.push(Excerpt {
            chunk_id: p.chunk_id.clone(),
            doc_id: p.doc_id.clone(),
            issuing_org: p.issuing_org.clone(),
            text,
            highlights,
        });
    }
    out
}

pub fn edge_triple(graph: &KnowledgeGraph, edge: &Edge) -> CandidateTriple {
    let ty = |id: &str| graph.node(id).map_or_else(String::new, |n| n.entity_type.clone());
    let mut t = CandidateTriple::new(
        (&label(graph, &edge.subject), &ty(&edge.subject)),
        &edge.relation,
        (&label(graph, &edge.object), &ty(&edge.object)),
        &[],
    );
    t.provenance = edge.provenance.iter().map(|p| p.chunk_id.clone()).collect();
    t.status = TripleStatus::Aligned;
    t
}

pub fn build_context(
    target: &ItemTarget,
    graph: &KnowledgeGraph,
    schema: &OntologySchema,
    chunks: &BTreeMap<String, Chunk>,
) -> ItemContext {
    let checklist = CHECKLIST.iter().map(|s| s.to_string()).collect();
    match target {
        ItemTarget::Edge { edge_id } => match graph.edge(edge_id) {
            Some(edge) => {
                let triple = edge_triple(graph, edge);
                let mut terms = names(graph.node(&edge.subject));
                terms.extend(names(graph.node(&edge.object)));
                ItemContext {
                    triple: triple.render(),
                    excerpts: excerpts(&edge.provenance, chunks, &terms),
                    violations: validate_triple(schema, &triple).err().unwrap_or_default().iter().map(|v| v.to_string()).collect(),
                    conflict: None,
                    checklist,
                }
            }
            None => ItemContext { triple: format!("missing edge {edge_id}"), excerpts: Vec::new(), violations: Vec::new(), conflict: None, checklist },
        },
        ItemTarget::Conflict { conflict_id } => match graph.conflict(conflict_id) {
            Some(c) => {
                let values: Vec<&str> = c.contenders.iter().map(|x| x.value.as_str()).collect();
                let terms = names(graph.node(&c.subject));
                ItemContext {
                    triple: format!("{} -[has_{}]-> one of: {}", label(graph, &c.subject), c.attribute, values.join(" | ")),
                    excerpts: excerpts(c.contenders.iter().flat_map(|x| &x.provenance), chunks, &terms),
                    violations: c.contenders.iter().filter_map(|x| x.flaw.as_ref().map(|f| format!("{}: {f}", x.value))).collect(),
                    conflict: Some(c.clone()),
                    checklist,
                }
            }
            None => ItemContext {
                triple: format!("missing conflict {conflict_id}"),
                excerpts: Vec::new(),
                violations: Vec::new(),
                conflict: None,
                checklist,
            },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highlights_merge_and_ignore_case() {
        let text = "Low HDL-C and hdl levels";
        assert_eq!(highlight(text, &["HDL", "HDL-C"]), vec![(4, 9), (14, 17)]);
        assert!(highlight(text, &["", "  "]).is_empty());
    }

    #[test]
    fn item_ids_depend_on_target_kind() {
        let e = ItemTarget::Edge { edge_id: "x".into() };
        let c = ItemTarget::Conflict { conflict_id: "x".into() };
        assert_ne!(e.item_id(), c.item_id());
        assert_eq!(e.item_id(), ItemTarget::Edge { edge_id: "x".into() }.item_id());
        assert!(e.item_id().starts_with("ri-"));
    }
}
