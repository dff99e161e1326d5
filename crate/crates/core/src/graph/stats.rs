use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EdgeStatus, KnowledgeGraph};

/// Coverage counts over non-retracted nodes and edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub nodes_by_type: BTreeMap<String, usize>,
    pub edges_by_relation: BTreeMap<String, usize>,
    pub edges_by_status: BTreeMap<String, usize>,
    /// Nodes carrying a physiological-system tag; fusion tags indicators only.
    pub indicators_by_system: BTreeMap<String, usize>,
    /// Distinct issuing organisations named in edge or attribute provenance.
    pub guidelines_covered: usize,
    pub conflicts_escalated: usize,
}

impl KnowledgeGraph {
    pub fn stats(&self) -> GraphStats {
        let mut s = GraphStats::default();
        let mut orgs = BTreeSet::new();
        for n in self.nodes().filter(|n| !n.retracted) {
            s.node_count += 1;
            *s.nodes_by_type.entry(n.entity_type.clone()).or_default() += 1;
            if let Some(tag) = &n.system_tag {
                *s.indicators_by_system.entry(tag.to_string()).or_default() += 1;
            }
            for a in n.attributes.values() {
                orgs.extend(a.provenance.iter().map(|p| p.issuing_org.clone()));
            }
        }
        for e in self.edges().filter(|e| e.status != EdgeStatus::Retracted) {
            s.edge_count += 1;
            *s.edges_by_relation.entry(e.relation.clone()).or_default() += 1;
            *s.edges_by_status.entry(e.status.to_string()).or_default() += 1;
            orgs.extend(e.provenance.iter().map(|p| p.issuing_org.clone()));
        }
        s.guidelines_covered = orgs.len();
        s.conflicts_escalated = self.conflicts().filter(|c| c.is_escalated()).count();
        s
    }
}
