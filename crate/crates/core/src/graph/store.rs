use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::io::{export_jsonl, import_jsonl, ImportError, Record};
use super::{GraphError, KnowledgeGraph};

/// One committed write: the full new state of every record it touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalEntry {
    pub seq: u64,
    pub records: Vec<Record>,
}

struct Persistence {
    graph_path: PathBuf,
    wal_path: PathBuf,
    next_seq: u64,
}

/// Single-writer, many-reader graph.
///
/// Readers take an `Arc` snapshot that later writes never touch. A write runs
/// against a private copy and is published only if it succeeds, so a failed
/// write leaves no trace. When backed by a file, each committed write is
/// appended to `<graph file>.wal` before it becomes visible, and
/// [`GraphStore::checkpoint`] folds the log into the graph file.
pub struct GraphStore {
    current: RwLock<Arc<KnowledgeGraph>>,
    writer: Mutex<Option<Persistence>>,
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io { path: path.to_path_buf(), source }
}

fn wal_path(graph_path: &Path) -> PathBuf {
    let mut p = graph_path.as_os_str().to_owned();
    p.push(".wal");
    PathBuf::from(p)
}

impl KnowledgeGraph {
    fn apply_record(&mut self, record: Record) {
        match record {
            Record::Header { schema_version, .. } => self.schema_version = schema_version,
            Record::Node(n) => {
                self.nodes.insert(n.entity_id.clone(), n);
            }
            Record::Edge(e) => {
                self.edges.insert(e.edge_id.clone(), e);
            }
            Record::Conflict(c) => {
                self.conflicts.insert(c.conflict_id.clone(), c);
            }
        }
    }

    /// Records that differ between `self` and the older `before`.
    fn diff_from(&self, before: &KnowledgeGraph) -> Vec<Record> {
        let mut out = Vec::new();
        if self.schema_version != before.schema_version {
            out.push(Record::Header {
                schema_version: self.schema_version.clone(),
                node_count: self.nodes.len(),
                edge_count: self.edges.len(),
                conflict_count: self.conflicts.len(),
            });
        }
        out.extend(self.nodes.values().filter(|n| before.nodes.get(&n.entity_id) != Some(n)).cloned().map(Record::Node));
        out.extend(self.edges.values().filter(|e| before.edges.get(&e.edge_id) != Some(e)).cloned().map(Record::Edge));
        out.extend(
            self.conflicts
                .values()
                .filter(|c| before.conflicts.get(&c.conflict_id) != Some(c))
                .cloned()
                .map(Record::Conflict),
        );
        out
    }
}

impl GraphStore {
    pub fn in_memory(graph: KnowledgeGraph) -> Self {
        GraphStore { current: RwLock::new(Arc::new(graph)), writer: Mutex::new(None) }
    }

    /// Opens `path` (an empty graph if absent) and replays its write-ahead log.
    pub fn open(path: &Path, schema_version: &str) -> Result<Self, GraphError> {
        let mut graph = if path.exists() {
            let f = File::open(path).map_err(|e| io_err(path, e))?;
            import_jsonl(BufReader::new(f))?
        } else {
            KnowledgeGraph::new(schema_version)
        };
        let wal = wal_path(path);
        let mut next_seq = 0;
        if wal.exists() {
            let f = File::open(&wal).map_err(|e| io_err(&wal, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| io_err(&wal, e))?;
                let entry: WalEntry = match serde_json::from_str(&line) {
                    Ok(e) => e,
                    // A torn final append is dropped; anything else is corruption.
                    Err(_) if is_last_line(&wal, i)? => break,
                    Err(e) => return Err(ImportError { line: i + 1, message: format!("wal: {e}") }.into()),
                };
                for r in entry.records {
                    graph.apply_record(r);
                }
                next_seq = entry.seq + 1;
            }
            graph.check_integrity()?;
        }
        Ok(GraphStore {
            current: RwLock::new(Arc::new(graph)),
            writer: Mutex::new(Some(Persistence { graph_path: path.to_path_buf(), wal_path: wal, next_seq })),
        })
    }

    /// Immutable view as of now.
    pub fn snapshot(&self) -> Arc<KnowledgeGraph> {
        self.current.read().expect("graph lock poisoned").clone()
    }

    /// Runs `f` on a private copy and publishes it if `f` succeeds.
    pub fn write<T, E>(&self, f: impl FnOnce(&mut KnowledgeGraph) -> Result<T, E>) -> Result<T, E>
    where
        E: From<GraphError>,
    {
        let mut persistence = self.writer.lock().expect("writer lock poisoned");
        let before = self.snapshot();
        let mut next = (*before).clone();
        let out = f(&mut next)?;
        next.check_integrity()?;
        if let Some(p) = persistence.as_mut() {
            let records = next.diff_from(&before);
            if !records.is_empty() {
                let entry = WalEntry { seq: p.next_seq, records };
                let mut file =
                    OpenOptions::new().create(true).append(true).open(&p.wal_path).map_err(|e| io_err(&p.wal_path, e))?;
                let mut line = serde_json::to_vec(&entry).expect("records serialize");
                line.push(b'\n');
                file.write_all(&line).and_then(|_| file.sync_data()).map_err(|e| io_err(&p.wal_path, e))?;
                p.next_seq += 1;
            }
        }
        *self.current.write().expect("graph lock poisoned") = Arc::new(next);
        Ok(out)
    }

    /// Rewrites the graph file from the current state and empties the log.
    pub fn checkpoint(&self) -> Result<(), GraphError> {
        let mut persistence = self.writer.lock().expect("writer lock poisoned");
        let Some(p) = persistence.as_mut() else {
            return Ok(());
        };
        let graph = self.snapshot();
        let tmp = p.graph_path.with_extension("tmp");
        {
            let f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
            let mut w = BufWriter::new(f);
            export_jsonl(&graph, &mut w).map_err(|e| io_err(&tmp, e))?;
            w.into_inner().map_err(|e| io_err(&tmp, e.into_error()))?.sync_all().map_err(|e| io_err(&tmp, e))?;
        }
        fs::rename(&tmp, &p.graph_path).map_err(|e| io_err(&p.graph_path, e))?;
        if p.wal_path.exists() {
            fs::remove_file(&p.wal_path).map_err(|e| io_err(&p.wal_path, e))?;
        }
        p.next_seq = 0;
        Ok(())
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.writer.lock().expect("writer lock poisoned").as_ref().map(|p| p.graph_path.clone())
    }
}

fn is_last_line(path: &Path, index: usize) -> Result<bool, GraphError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(BufReader::new(f).lines().count() == index + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::prov;
    use crate::graph::{Edge, EdgeStatus, Node};

    fn seed(g: &mut KnowledgeGraph) -> Result<String, GraphError> {
        g.upsert_node(Node::new("a", "ClinicalIndicator", "A"));
        g.upsert_node(Node::new("b", "Disease", "B"));
        let e = Edge::candidate("a", "r", "b", vec![prov("d", "d#0", "X")]);
        let id = e.edge_id.clone();
        g.upsert_edge(e)?;
        Ok(id)
    }

    #[test]
    fn snapshots_do_not_see_later_writes() {
        let store = GraphStore::in_memory(KnowledgeGraph::new("1"));
        let before = store.snapshot();
        store.write(seed).unwrap();
        assert!(before.is_empty());
        assert_eq!(store.snapshot().node_count(), 2);
    }

    #[test]
    fn failed_write_is_discarded() {
        let store = GraphStore::in_memory(KnowledgeGraph::new("1"));
        let r: Result<(), GraphError> = store.write(|g| {
            g.upsert_node(Node::new("a", "Disease", "A"));
            Err(GraphError::NotFound("x".into()))
        });
        assert!(r.is_err());
        assert!(store.snapshot().is_empty());
    }

    #[test]
    fn wal_replay_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.jsonl");
        let id = {
            let store = GraphStore::open(&path, "1").unwrap();
            let id = store.write(seed).unwrap();
            store.write(|g| g.set_edge_status(&id, EdgeStatus::Asserted, Some("d1"))).unwrap();
            id
        };
        assert!(!path.exists());
        let store = GraphStore::open(&path, "1").unwrap();
        assert_eq!(store.snapshot().edge(&id).unwrap().status, EdgeStatus::Asserted);
        let expected = store.snapshot().to_jsonl();
        store.checkpoint().unwrap();
        assert!(!wal_path(&path).exists());
        assert_eq!(fs::read_to_string(&path).unwrap(), expected);
        let reopened = GraphStore::open(&path, "1").unwrap();
        assert_eq!(*reopened.snapshot(), *store.snapshot());
    }

    #[test]
    fn torn_wal_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        {
            let store = GraphStore::open(&path, "1").unwrap();
            store.write(seed).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(wal_path(&path)).unwrap();
        f.write_all(br#"{"seq":1,"recor"#).unwrap();
        let store = GraphStore::open(&path, "1").unwrap();
        assert_eq!(store.snapshot().node_count(), 2);
    }
}
