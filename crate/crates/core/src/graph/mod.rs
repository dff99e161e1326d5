//! Provenance-tracked property graph.
//!
//! Nodes are canonical entities keyed by `entity_id`; edges are triples keyed
//! by a hash of (subject, relation, object), so a triple has exactly one edge
//! for its whole life. Retraction is a status change, never a delete.

mod io;
mod query;
mod stats;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::SystemTag;
use crate::ontology::ExternalCodeRef;

pub use io::{export_jsonl, import_jsonl, ImportError, Record};
pub use query::{EdgePattern, NodePattern, Subgraph, MAX_HOPS};
pub use stats::GraphStats;
pub use store::{GraphStore, WalEntry};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("max_hops {0} exceeds the limit of 4")]
    HopLimit(usize),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

pub(crate) fn short_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}

pub fn edge_id(subject: &str, relation: &str, object: &str) -> String {
    format!("e-{}", short_hash(&[subject, relation, object]))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExtractorId {
    pub template_id: String,
    pub version: u32,
    /// Provider name, model and parameter digest.
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub chunk_id: String,
    pub issuing_org: String,
    pub extractor: ExtractorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_decision_id: Option<String>,
}

impl Provenance {
    /// Same document, chunk, org and extractor; the review stamp is ignored.
    pub fn same_source(&self, other: &Provenance) -> bool {
        self.chunk_id == other.chunk_id
            && self.doc_id == other.doc_id
            && self.issuing_org == other.issuing_org
            && self.extractor == other.extractor
    }
}

/// Sorted union with one entry per source. A review-stamped entry absorbs an
/// unstamped one, so re-fusing reviewed evidence changes nothing.
pub fn union_provenance(into: &mut Vec<Provenance>, more: impl IntoIterator<Item = Provenance>) {
    into.extend(more);
    into.sort();
    into.dedup_by(|later, kept| {
        let same = later.same_source(kept);
        if same && kept.review_decision_id.is_none() {
            kept.review_decision_id = later.review_decision_id.take();
        }
        same
    });
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeValue {
    /// Rendered value: a decimal, a rendered reference range, or a token.
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub entity_id: String,
    pub entity_type: String,
    pub label: String,
    pub aliases: BTreeSet<String>,
    pub attributes: BTreeMap<String, AttributeValue>,
    pub external_codes: Vec<ExternalCodeRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_tag: Option<SystemTag>,
    pub provisional: bool,
    #[serde(default)]
    pub retracted: bool,
}

impl Node {
    pub fn new(entity_id: &str, entity_type: &str, label: &str) -> Self {
        Node {
            entity_id: entity_id.to_string(),
            entity_type: entity_type.to_string(),
            label: label.to_string(),
            aliases: BTreeSet::from([label.to_string()]),
            attributes: BTreeMap::new(),
            external_codes: Vec::new(),
            system_tag: None,
            provisional: false,
            retracted: false,
        }
    }

    /// True when `text` equals the label or an alias, ignoring case.
    pub fn matches_label(&self, text: &str) -> bool {
        let folded = text.trim().to_lowercase();
        self.label.to_lowercase() == folded || self.aliases.iter().any(|a| a.to_lowercase() == folded)
    }

    fn merge(&mut self, other: Node) {
        // Non-provisional labels beat provisional ones; otherwise the smaller
        // label wins so the result does not depend on arrival order.
        let take_label = match (self.provisional, other.provisional) {
            (true, false) => true,
            (false, true) => false,
            _ => other.label < self.label,
        };
        if take_label {
            self.label = other.label.clone();
        }
        self.provisional &= other.provisional;
        self.aliases.extend(other.aliases);
        self.aliases.insert(self.label.clone());
        for (name, incoming) in other.attributes {
            match self.attributes.get_mut(&name) {
                Some(existing) if existing.value == incoming.value && existing.unit == incoming.unit => {
                    union_provenance(&mut existing.provenance, incoming.provenance);
                }
                Some(_) => {}
                None => {
                    self.attributes.insert(name, incoming);
                }
            }
        }
        self.external_codes.extend(other.external_codes);
        self.external_codes.sort();
        self.external_codes.dedup();
        // Smallest tag wins, again for order independence.
        self.system_tag = match (self.system_tag.take(), other.system_tag) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeStatus {
    Candidate,
    Asserted,
    Retracted,
}

impl fmt::Display for EdgeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeStatus::Candidate => "candidate",
            EdgeStatus::Asserted => "asserted",
            EdgeStatus::Retracted => "retracted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub edge_id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub provenance: Vec<Provenance>,
    pub status: EdgeStatus,
}

impl Edge {
    pub fn candidate(subject: &str, relation: &str, object: &str, provenance: Vec<Provenance>) -> Self {
        let mut edge = Edge {
            edge_id: edge_id(subject, relation, object),
            subject: subject.to_string(),
            relation: relation.to_string(),
            object: object.to_string(),
            provenance: Vec::new(),
            status: EdgeStatus::Candidate,
        };
        union_provenance(&mut edge.provenance, provenance);
        edge
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contender {
    pub value: String,
    pub issuing_org: String,
    pub provenance: Vec<Provenance>,
    /// Set when the value could not be compared, e.g. incompatible units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flaw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolution {
    Resolved { winner: usize, rationale: String },
    Escalated { rationale: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub conflict_id: String,
    pub subject: String,
    /// Attribute or relation name.
    pub attribute: String,
    pub contenders: Vec<Contender>,
    pub resolution: Resolution,
}

impl Conflict {
    /// Id derived from the subject, attribute and the sorted contender values.
    pub fn id_for(subject: &str, attribute: &str, contenders: &[Contender]) -> String {
        let mut values: Vec<&str> = contenders.iter().map(|c| c.value.as_str()).collect();
        values.sort();
        values.dedup();
        let joined = values.join("\u{1f}");
        format!("c-{}", short_hash(&[subject, attribute, &joined]))
    }

    /// Sorts contenders by (value, org) and keeps the winner pointing at
    /// the same contender.
    pub fn canonicalize(&mut self) {
        let winner = match &self.resolution {
            Resolution::Resolved { winner, .. } => self.contenders.get(*winner).map(|c| (c.value.clone(), c.issuing_org.clone())),
            Resolution::Escalated { .. } => None,
        };
        for c in &mut self.contenders {
            union_provenance(&mut c.provenance, []);
        }
        self.contenders.sort_by(|a, b| (&a.value, &a.issuing_org).cmp(&(&b.value, &b.issuing_org)));
        if let (Some((v, o)), Resolution::Resolved { winner, .. }) = (winner, &mut self.resolution) {
            *winner = self.contenders.iter().position(|c| c.value == v && c.issuing_org == o).expect("winner kept");
        }
    }

    pub fn is_escalated(&self) -> bool {
        matches!(self.resolution, Resolution::Escalated { .. })
    }
}

/// In-memory graph. Equality is canonical: every collection is ordered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub schema_version: String,
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<String, Edge>,
    conflicts: BTreeMap<String, Conflict>,
}

impl KnowledgeGraph {
    pub fn new(schema_version: &str) -> Self {
        KnowledgeGraph { schema_version: schema_version.to_string(), ..Default::default() }
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn conflict(&self, id: &str) -> Option<&Conflict> {
        self.conflicts.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn conflicts(&self) -> impl Iterator<Item = &Conflict> {
        self.conflicts.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edge for the triple, whatever its status.
    pub fn edge_for(&self, subject: &str, relation: &str, object: &str) -> Option<&Edge> {
        self.edges.get(&edge_id(subject, relation, object))
    }

    /// Inserts, or merges into the existing node with the same id.
    pub fn upsert_node(&mut self, node: Node) {
        match self.nodes.get_mut(&node.entity_id) {
            Some(existing) => existing.merge(node),
            None => {
                let mut node = node;
                node.aliases.insert(node.label.clone());
                self.nodes.insert(node.entity_id.clone(), node);
            }
        }
    }

    /// Inserts, or unions provenance into the existing edge. The existing
    /// status is kept: fusion never resurrects a retracted edge.
    pub fn upsert_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        for end in [&edge.subject, &edge.object] {
            match self.nodes.get(end) {
                None => return Err(GraphError::Integrity(format!("edge {} references missing node {end}", edge.edge_id))),
                Some(n) if n.retracted && edge.status != EdgeStatus::Retracted => {
                    return Err(GraphError::Integrity(format!("edge {} references retracted node {end}", edge.edge_id)))
                }
                Some(_) => {}
            }
        }
        let expected = edge_id(&edge.subject, &edge.relation, &edge.object);
        if edge.edge_id != expected {
            return Err(GraphError::Integrity(format!("edge id {} does not match its triple ({expected})", edge.edge_id)));
        }
        if edge.provenance.is_empty() {
            return Err(GraphError::Integrity(format!("edge {} has no provenance", edge.edge_id)));
        }
        match self.edges.get_mut(&edge.edge_id) {
            Some(existing) => union_provenance(&mut existing.provenance, edge.provenance),
            None => {
                let mut edge = edge;
                union_provenance(&mut edge.provenance, []);
                self.edges.insert(edge.edge_id.clone(), edge);
            }
        }
        Ok(())
    }

    /// Sets the status. A decision id, when given, is stamped on every
    /// provenance entry.
    pub fn set_edge_status(&mut self, edge_id: &str, status: EdgeStatus, decision_id: Option<&str>) -> Result<(), GraphError> {
        let edge = self.edges.get_mut(edge_id).ok_or_else(|| GraphError::NotFound(format!("edge {edge_id}")))?;
        if status != EdgeStatus::Retracted {
            for end in [&edge.subject, &edge.object] {
                if self.nodes.get(end).is_none_or(|n| n.retracted) {
                    return Err(GraphError::Integrity(format!("edge {edge_id} endpoint {end} is retracted")));
                }
            }
        }
        edge.status = status;
        if let Some(d) = decision_id {
            for p in &mut edge.provenance {
                p.review_decision_id = Some(d.to_string());
            }
            union_provenance(&mut edge.provenance, []);
        }
        Ok(())
    }

    /// Retracts a node and every edge touching it.
    pub fn retract_node(&mut self, entity_id: &str) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(entity_id).ok_or_else(|| GraphError::NotFound(format!("node {entity_id}")))?;
        node.retracted = true;
        for e in self.edges.values_mut() {
            if e.subject == entity_id || e.object == entity_id {
                e.status = EdgeStatus::Retracted;
            }
        }
        Ok(())
    }

    /// Replaces an attribute value outright (conflict resolution).
    pub fn set_attribute(&mut self, entity_id: &str, name: &str, value: AttributeValue) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(entity_id).ok_or_else(|| GraphError::NotFound(format!("node {entity_id}")))?;
        node.attributes.insert(name.to_string(), value);
        Ok(())
    }

    pub fn upsert_conflict(&mut self, conflict: Conflict) -> Result<(), GraphError> {
        if !self.nodes.contains_key(&conflict.subject) {
            return Err(GraphError::Integrity(format!("conflict on missing node {}", conflict.subject)));
        }
        if conflict.contenders.len() < 2 {
            return Err(GraphError::Integrity(format!("conflict {} has fewer than two contenders", conflict.conflict_id)));
        }
        match self.conflicts.get_mut(&conflict.conflict_id) {
            // Keep an existing (possibly expert) resolution; merge evidence.
            Some(existing) => {
                for c in conflict.contenders {
                    match existing.contenders.iter_mut().find(|e| e.value == c.value && e.issuing_org == c.issuing_org) {
                        Some(e) => union_provenance(&mut e.provenance, c.provenance),
                        None => existing.contenders.push(c),
                    }
                }
                existing.canonicalize();
            }
            None => {
                let mut conflict = conflict;
                conflict.canonicalize();
                self.conflicts.insert(conflict.conflict_id.clone(), conflict);
            }
        }
        Ok(())
    }

    pub fn set_conflict_resolution(&mut self, conflict_id: &str, resolution: Resolution) -> Result<(), GraphError> {
        let c = self
            .conflicts
            .get_mut(conflict_id)
            .ok_or_else(|| GraphError::NotFound(format!("conflict {conflict_id}")))?;
        if let Resolution::Resolved { winner, .. } = &resolution {
            if *winner >= c.contenders.len() {
                return Err(GraphError::Integrity(format!("winner {winner} out of range for {conflict_id}")));
            }
        }
        c.resolution = resolution;
        Ok(())
    }

    /// Every edge endpoint and conflict subject exists, and no live edge
    /// touches a retracted node.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        for e in self.edges.values() {
            for end in [&e.subject, &e.object] {
                let Some(n) = self.nodes.get(end) else {
                    return Err(GraphError::Integrity(format!("edge {} references missing node {end}", e.edge_id)));
                };
                if n.retracted && e.status != EdgeStatus::Retracted {
                    return Err(GraphError::Integrity(format!("edge {} survives retracted node {end}", e.edge_id)));
                }
            }
        }
        for c in self.conflicts.values() {
            if !self.nodes.contains_key(&c.subject) {
                return Err(GraphError::Integrity(format!("conflict {} on missing node {}", c.conflict_id, c.subject)));
            }
        }
        Ok(())
    }
}
