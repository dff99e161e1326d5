use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Conflict, Edge, KnowledgeGraph, Node};

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ImportError {
    /// 1-based line number of the offending record.
    pub line: usize,
    pub message: String,
}

/// One line of the JSON Lines graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header { schema_version: String, node_count: usize, edge_count: usize, conflict_count: usize },
    Node(Node),
    Edge(Edge),
    Conflict(Conflict),
}

/// Header, then nodes, edges and conflicts, each group sorted by id. Equal
/// graphs export byte-identical files.
pub fn export_jsonl(graph: &KnowledgeGraph, out: &mut impl Write) -> std::io::Result<()> {
    let header = Record::Header {
        schema_version: graph.schema_version.clone(),
        node_count: graph.nodes.len(),
        edge_count: graph.edges.len(),
        conflict_count: graph.conflicts.len(),
    };
    let line = |out: &mut dyn Write, r: &Record| -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")
    };
    line(out, &header)?;
    for n in graph.nodes.values() {
        line(out, &Record::Node(n.clone()))?;
    }
    for e in graph.edges.values() {
        line(out, &Record::Edge(e.clone()))?;
    }
    for c in graph.conflicts.values() {
        line(out, &Record::Conflict(c.clone()))?;
    }
    Ok(())
}

impl KnowledgeGraph {
    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        export_jsonl(self, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json writes UTF-8")
    }
}

fn err(line: usize, message: impl Into<String>) -> ImportError {
    ImportError { line, message: message.into() }
}

/// Reads a file written by [`export_jsonl`]. Group order, id order, counts
/// and referential integrity are all checked.
pub fn import_jsonl(input: impl BufRead) -> Result<KnowledgeGraph, ImportError> {
    let mut graph = KnowledgeGraph::default();
    let mut expected: Option<(usize, usize, usize)> = None;
    let mut stage = 0u8;
    let mut last_id = String::new();
    let mut line_no = 0;
    for line in input.lines() {
        line_no += 1;
        let line = line.map_err(|e| err(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            return Err(err(line_no, "blank line"));
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| err(line_no, e.to_string()))?;
        let (rank, id) = match &record {
            Record::Header { .. } => (0, String::new()),
            Record::Node(n) => (1, n.entity_id.clone()),
            Record::Edge(e) => (2, e.edge_id.clone()),
            Record::Conflict(c) => (3, c.conflict_id.clone()),
        };
        if (line_no == 1) != (rank == 0) {
            return Err(err(line_no, if line_no == 1 { "expected header record" } else { "unexpected second header" }));
        }
        if rank < stage || (rank == stage && rank != 0 && id <= last_id) {
            return Err(err(line_no, format!("record {id:?} out of canonical order")));
        }
        stage = rank;
        last_id = id;
        match record {
            Record::Header { schema_version, node_count, edge_count, conflict_count } => {
                graph.schema_version = schema_version;
                expected = Some((node_count, edge_count, conflict_count));
            }
            Record::Node(n) => {
                graph.nodes.insert(n.entity_id.clone(), n);
            }
            Record::Edge(e) => {
                if super::edge_id(&e.subject, &e.relation, &e.object) != e.edge_id {
                    return Err(err(line_no, format!("edge id {} does not match its triple", e.edge_id)));
                }
                graph.edges.insert(e.edge_id.clone(), e);
            }
            Record::Conflict(c) => {
                graph.conflicts.insert(c.conflict_id.clone(), c);
            }
        }
    }
    let Some((n, e, c)) = expected else {
        return Err(err(1, "missing header record"));
    };
    if (graph.nodes.len(), graph.edges.len(), graph.conflicts.len()) != (n, e, c) {
        return Err(err(
            line_no + 1,
            format!(
                "file ends early: header promises {n} nodes, {e} edges, {c} conflicts; found {}, {}, {}",
                graph.nodes.len(),
                graph.edges.len(),
                graph.conflicts.len()
            ),
        ));
    }
    graph.check_integrity().map_err(|e| err(line_no, e.to_string()))?;
    Ok(graph)
}
