use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{QaError, Question};
use crate::corpus::Chunk;
use crate::graph::{Edge, EdgeStatus, KnowledgeGraph, Node};
use crate::retrieval::{EmbeddingProvider, IndexError, VectorIndex};

pub const MAX_HOP_LIMIT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkHit {
    pub chunk_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Everything an answer may draw on. Edges are all asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub question: String,
    pub seed_entities: Vec<String>,
    pub nodes: BTreeMap<String, Node>,
    pub edges: BTreeMap<String, Edge>,
    pub chunks: Vec<ChunkHit>,
    pub hop_limit: usize,
}

impl ContextBundle {
    pub fn label<'a>(&'a self, id: &'a str) -> &'a str {
        self.nodes.get(id).map_or(id, |n| n.label.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.seed_entities.is_empty() && self.chunks.is_empty()
    }
}

/// Where passages come from. Optional: QA works on the graph alone.
#[derive(Clone, Copy)]
pub struct Passages<'a> {
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn EmbeddingProvider,
    pub chunks: &'a BTreeMap<String, Chunk>,
}

fn boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Live nodes whose label or an alias occurs in `text`, case-folded, at word
/// boundaries. A match inside a longer match of another node is dropped, so
/// "LDL cholesterol" does not also seed "cholesterol".
pub fn find_seeds(text: &str, graph: &KnowledgeGraph) -> Vec<String> {
    let hay = text.to_lowercase();
    let mut hits: Vec<(usize, usize, &str)> = Vec::new();
    for n in graph.nodes().filter(|n| !n.retracted) {
        let names: BTreeSet<String> = n.aliases.iter().chain([&n.label]).map(|s| s.trim().to_lowercase()).collect();
        for name in names.iter().filter(|s| !s.is_empty()) {
            let mut from = 0;
            while let Some(pos) = hay[from..].find(name.as_str()) {
                let (s, e) = (from + pos, from + pos + name.len());
                if boundary(hay[..s].chars().next_back()) && boundary(hay[e..].chars().next()) {
                    hits.push((s, e, &n.entity_id));
                }
                from = s + hay[s..].chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    let kept: BTreeSet<&str> = hits
        .iter()
        .filter(|(s, e, id)| !hits.iter().any(|(s2, e2, id2)| id2 != id && s2 <= s && e <= e2 && e2 - s2 > e - s))
        .map(|(_, _, id)| *id)
        .collect();
    kept.into_iter().map(str::to_string).collect()
}

/// Seeds, their asserted neighbourhood within `hop_limit`, and the top `k`
/// passages for the question.
pub fn retrieve_context(
    question: &Question,
    graph: &KnowledgeGraph,
    passages: Option<Passages<'_>>,
    k: usize,
    hop_limit: usize,
) -> Result<ContextBundle, QaError> {
    if hop_limit > MAX_HOP_LIMIT {
        return Err(QaError::HopLimit(hop_limit));
    }
    let seeds = find_seeds(&question.text, graph);
    let sub = graph.neighborhood(seeds.iter().map(String::as_str), hop_limit);
    let nodes = sub.nodes.iter().filter_map(|id| graph.node(id)).map(|n| (n.entity_id.clone(), n.clone())).collect();
    let edges = sub
        .edges
        .iter()
        .filter_map(|id| graph.edge(id))
        .filter(|e| e.status == EdgeStatus::Asserted)
        .map(|e| (e.edge_id.clone(), e.clone()))
        .collect();
    let mut chunks = Vec::new();
    if let Some(p) = passages {
        if k > 0 && !p.index.is_empty() {
            let v = p.embedder.embed(&question.text)?;
            match p.index.search(&v, k) {
                Ok(hits) => {
                    chunks = hits
                        .into_iter()
                        .map(|h| ChunkHit { text: p.chunks.get(&h.chunk_id).map(|c| c.text.clone()), chunk_id: h.chunk_id, score: h.score })
                        .collect()
                }
                // A question with no indexable tokens simply retrieves nothing.
                Err(IndexError::ZeroVector { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    let bundle = ContextBundle { question: question.text.clone(), seed_entities: seeds, nodes, edges, chunks, hop_limit };
    if bundle.is_empty() {
        return Err(QaError::NoContext);
    }
    Ok(bundle)
}
