use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeStatus, GraphError, KnowledgeGraph, Node};

pub const MAX_HOPS: usize = 4;

/// Conjunctive node filter; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePattern {
    pub entity_type: Option<String>,
    /// Case-folded exact match against the label or any alias.
    pub label: Option<String>,
    #[serde(default)]
    pub include_retracted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePattern {
    pub relation: Option<String>,
    pub status: Option<EdgeStatus>,
    pub subject: Option<String>,
    pub object: Option<String>,
}

/// Node and edge ids of a neighbourhood.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<String>,
}

impl KnowledgeGraph {
    pub fn find_nodes(&self, pattern: &NodePattern) -> Vec<&Node> {
        self.nodes()
            .filter(|n| pattern.include_retracted || !n.retracted)
            .filter(|n| pattern.entity_type.as_ref().is_none_or(|t| &n.entity_type == t))
            .filter(|n| pattern.label.as_ref().is_none_or(|l| n.matches_label(l)))
            .collect()
    }

    pub fn find_edges(&self, pattern: &EdgePattern) -> Vec<&Edge> {
        self.edges()
            .filter(|e| pattern.relation.as_ref().is_none_or(|r| &e.relation == r))
            .filter(|e| pattern.status.is_none_or(|s| e.status == s))
            .filter(|e| pattern.subject.as_ref().is_none_or(|s| &e.subject == s))
            .filter(|e| pattern.object.as_ref().is_none_or(|o| &e.object == o))
            .collect()
    }

    /// Undirected adjacency over asserted edges: node -> [(edge_id, neighbour)].
    fn asserted_adjacency(&self) -> BTreeMap<&str, Vec<(&str, &str)>> {
        let mut adj: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
        for e in self.edges().filter(|e| e.status == EdgeStatus::Asserted) {
            adj.entry(&e.subject).or_default().push((&e.edge_id, &e.object));
            if e.subject != e.object {
                adj.entry(&e.object).or_default().push((&e.edge_id, &e.subject));
            }
        }
        adj
    }

    /// Nodes and asserted edges within `hops` of any seed, ignoring direction.
    pub fn neighborhood<'a>(&self, seeds: impl IntoIterator<Item = &'a str>, hops: usize) -> Subgraph {
        let adj = self.asserted_adjacency();
        let mut out = Subgraph::default();
        let mut queue = VecDeque::new();
        for s in seeds {
            if self.node(s).is_some_and(|n| !n.retracted) && out.nodes.insert(s.to_string()) {
                queue.push_back((s.to_string(), 0));
            }
        }
        while let Some((id, depth)) = queue.pop_front() {
            if depth == hops {
                continue;
            }
            for (edge, next) in adj.get(id.as_str()).into_iter().flatten() {
                out.edges.insert(edge.to_string());
                if out.nodes.insert(next.to_string()) {
                    queue.push_back((next.to_string(), depth + 1));
                }
            }
        }
        out
    }

    /// All simple paths from `src` to `dst` with at most `max_hops` asserted
    /// edges, traversed in either direction. Each path is its edge ids; paths
    /// come back sorted. `src == dst` yields the single empty path.
    pub fn paths(&self, src: &str, dst: &str, max_hops: usize) -> Result<Vec<Vec<String>>, GraphError> {
        if max_hops > MAX_HOPS {
            return Err(GraphError::HopLimit(max_hops));
        }
        for end in [src, dst] {
            if self.node(end).is_none_or(|n| n.retracted) {
                return Err(GraphError::Integrity(format!("path endpoint {end} does not exist")));
            }
        }
        if src == dst {
            return Ok(vec![Vec::new()]);
        }
        let adj = self.asserted_adjacency();
        let mut found = Vec::new();
        let mut visited = vec![src];
        let mut trail = Vec::new();
        walk(&adj, src, dst, max_hops, &mut visited, &mut trail, &mut found);
        found.sort();
        Ok(found)
    }
}

fn walk<'a>(
    adj: &BTreeMap<&'a str, Vec<(&'a str, &'a str)>>,
    at: &'a str,
    dst: &str,
    budget: usize,
    visited: &mut Vec<&'a str>,
    trail: &mut Vec<&'a str>,
    found: &mut Vec<Vec<String>>,
) {
    if budget == 0 {
        return;
    }
    for &(edge, next) in adj.get(at).into_iter().flatten() {
        if visited.contains(&next) {
            continue;
        }
        trail.push(edge);
        if next == dst {
            found.push(trail.iter().map(|s| s.to_string()).collect());
        } else {
            visited.push(next);
            walk(adj, next, dst, budget - 1, visited, trail, found);
            visited.pop();
        }
        trail.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::prov;
    use crate::graph::Edge;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, triples: &[(usize, usize, u8)]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new("1");
        for i in 0..n {
            g.upsert_node(Node::new(&format!("n{i:02}"), "T", &format!("N{i}")));
        }
        for (s, o, r) in triples {
            let e = Edge::candidate(&format!("n{s:02}"), &format!("r{r}"), &format!("n{o:02}"), vec![prov("d", "d#0000", "X")]);
            let id = e.edge_id.clone();
            g.upsert_edge(e).unwrap();
            g.set_edge_status(&id, EdgeStatus::Asserted, None).unwrap();
        }
        g
    }

    /// Oracle: enumerate every edge sequence of length 1..=max and keep those
    /// that form a simple walk from src to dst.
    fn brute_force(g: &KnowledgeGraph, src: &str, dst: &str, max: usize) -> Vec<Vec<String>> {
        if src == dst {
            return vec![vec![]];
        }
        let edges: Vec<&Edge> = g.edges().filter(|e| e.status == EdgeStatus::Asserted).collect();
        let mut out = Vec::new();
        let mut seqs: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..max {
            let mut next = Vec::new();
            for s in &seqs {
                for i in 0..edges.len() {
                    let mut t = s.clone();
                    t.push(i);
                    next.push(t);
                }
            }
            for s in &next {
                let mut nodes = vec![src.to_string()];
                let mut ok = true;
                for &i in s {
                    let at = nodes.last().unwrap().clone();
                    let e = edges[i];
                    let other = if e.subject == at {
                        e.object.clone()
                    } else if e.object == at {
                        e.subject.clone()
                    } else {
                        ok = false;
                        break;
                    };
                    if nodes.contains(&other) {
                        ok = false;
                        break;
                    }
                    nodes.push(other);
                }
                if ok && nodes.last().unwrap() == dst {
                    out.push(s.iter().map(|&i| edges[i].edge_id.clone()).collect());
                }
            }
            seqs = next.into_iter().filter(|s| {
                // prune sequences that already broke or already reached dst
                let mut at = src.to_string();
                let mut seen = vec![at.clone()];
                for &i in s {
                    let e = edges[i];
                    let other = if e.subject == at { e.object.clone() } else if e.object == at { e.subject.clone() } else { return false };
                    if seen.contains(&other) || other == dst {
                        return false;
                    }
                    seen.push(other.clone());
                    at = other;
                }
                true
            }).collect();
        }
        out.sort();
        out
    }

    #[test]
    fn zero_length_and_limits() {
        let g = graph(3, &[(0, 1, 0), (1, 2, 0)]);
        assert_eq!(g.paths("n00", "n00", 2).unwrap(), vec![Vec::<String>::new()]);
        assert!(matches!(g.paths("n00", "n02", 5), Err(GraphError::HopLimit(5))));
        assert!(matches!(g.paths("n00", "zz", 2), Err(GraphError::Integrity(_))));
        assert!(g.paths("n00", "n02", 1).unwrap().is_empty());
        assert_eq!(g.paths("n02", "n00", 2).unwrap().len(), 1);
    }

    #[test]
    fn candidate_edges_are_not_traversed() {
        let mut g = graph(2, &[]);
        g.upsert_edge(Edge::candidate("n00", "r", "n01", vec![prov("d", "d#0000", "X")])).unwrap();
        assert!(g.paths("n00", "n01", 1).unwrap().is_empty());
        assert_eq!(g.neighborhood(["n00"], 2).nodes.len(), 1);
    }

    #[test]
    fn neighborhood_respects_hops() {
        let g = graph(4, &[(0, 1, 0), (2, 1, 0), (2, 3, 0)]);
        assert_eq!(g.neighborhood(["n00"], 0).nodes, BTreeSet::from(["n00".to_string()]));
        assert_eq!(g.neighborhood(["n00"], 2).nodes.len(), 3);
        assert_eq!(g.neighborhood(["n00"], 2).edges.len(), 2);
        assert_eq!(g.neighborhood(["n00"], 3).nodes.len(), 4);
    }

    #[test]
    fn find_by_label_and_type() {
        let mut g = graph(2, &[]);
        let mut hdl = Node::new("ClinicalIndicator:high-density lipoprotein", "ClinicalIndicator", "High-density lipoprotein");
        hdl.aliases.insert("HDL".into());
        g.upsert_node(hdl);
        let hits = g.find_nodes(&NodePattern { label: Some("hdl".into()), ..Default::default() });
        assert_eq!(hits.len(), 1);
        assert_eq!(g.find_nodes(&NodePattern::default()).len(), 3);
        assert_eq!(g.find_nodes(&NodePattern { entity_type: Some("T".into()), ..Default::default() }).len(), 2);
    }

    #[test]
    fn random_graphs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let n = rng.random_range(2..=30);
            let m = rng.random_range(0..=12);
            let triples: Vec<(usize, usize, u8)> =
                (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..2))).collect();
            let g = graph(n, &triples);
            let hops = rng.random_range(0..=4);
            let (s, d) = (format!("n{:02}", rng.random_range(0..n)), format!("n{:02}", rng.random_range(0..n)));
            assert_eq!(g.paths(&s, &d, hops).unwrap(), brute_force(&g, &s, &d, hops));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dense_small_graphs_match_oracle(
            triples in prop::collection::vec((0usize..6, 0usize..6, 0u8..2), 0..9),
            hops in 0usize..=4, s in 0usize..6, d in 0usize..6,
        ) {
            let g = graph(6, &triples);
            let (s, d) = (format!("n{s:02}"), format!("n{d:02}"));
            prop_assert_eq!(g.paths(&s, &d, hops).unwrap(), brute_force(&g, &s, &d, hops));
        }
    }
}
