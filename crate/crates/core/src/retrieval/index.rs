use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embed::{cosine, EmbeddingProvider, EmbeddingVector, ProviderError};
use crate::corpus::Chunk;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("chunk {chunk_id} has no tokens to embed")]
    ZeroVector { chunk_id: String },
    #[error("chunk {chunk_id} is already indexed")]
    Duplicate { chunk_id: String },
    #[error("vector has dimension {got}, index expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("malformed index file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedChunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Unit-normalized components, as persisted.
    pub vector: Vec<f32>,
}

impl IndexedChunk {
    /// The document part of a `doc#ordinal` chunk id.
    pub fn doc_of(chunk_id: &str) -> &str {
        chunk_id.rsplit_once('#').map_or(chunk_id, |(d, _)| d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
}

/// Rank order: score descending, then chunk id ascending.
fn rank(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

/// Heap entry whose maximum is the worst-ranked hit.
struct Worst(SearchHit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        rank(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank(&self.0, &other.0)
    }
}

#[derive(Debug, Default)]
struct Entries {
    by_id: HashMap<String, usize>,
    chunks: Vec<IndexedChunk>,
    /// f64 copies of `chunks[i].vector`, used for scoring.
    widened: Vec<Vec<f64>>,
}

/// Exact top-k cosine index. Reads run concurrently; an `add` is visible to
/// every search that starts after it returns.
#[derive(Debug)]
pub struct VectorIndex {
    dimension: usize,
    entries: RwLock<Entries>,
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Self {
        VectorIndex { dimension, entries: RwLock::new(Entries::default()) }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("index lock").chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.entries.read().expect("index lock").by_id.contains_key(chunk_id)
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> Vec<IndexedChunk> {
        self.entries.read().expect("index lock").chunks.clone()
    }

    pub fn add(&self, chunk_id: &str, vector: &EmbeddingVector) -> Result<(), IndexError> {
        if vector.dimension() != self.dimension {
            return Err(IndexError::Dimension { expected: self.dimension, got: vector.dimension() });
        }
        if vector.is_zero() {
            return Err(IndexError::ZeroVector { chunk_id: chunk_id.to_string() });
        }
        let unit: Vec<f32> = vector.components().iter().map(|c| (c / vector.norm()) as f32).collect();
        self.insert(IndexedChunk { chunk_id: chunk_id.to_string(), doc_id: IndexedChunk::doc_of(chunk_id).to_string(), vector: unit })
    }

    pub fn add_chunk(&self, chunk: &Chunk, vector: &EmbeddingVector) -> Result<(), IndexError> {
        self.add(&chunk.chunk_id, vector)
    }

    /// Inserts stored components verbatim.
    pub(crate) fn insert(&self, entry: IndexedChunk) -> Result<(), IndexError> {
        if entry.vector.len() != self.dimension {
            return Err(IndexError::Dimension { expected: self.dimension, got: entry.vector.len() });
        }
        if entry.vector.iter().all(|c| *c == 0.0) {
            return Err(IndexError::ZeroVector { chunk_id: entry.chunk_id });
        }
        let mut guard = self.entries.write().expect("index lock");
        if guard.by_id.contains_key(&entry.chunk_id) {
            return Err(IndexError::Duplicate { chunk_id: entry.chunk_id });
        }
        let at = guard.chunks.len();
        guard.by_id.insert(entry.chunk_id.clone(), at);
        guard.widened.push(entry.vector.iter().map(|&c| f64::from(c)).collect());
        guard.chunks.push(entry);
        Ok(())
    }

    fn check_query(&self, query: &EmbeddingVector, k: usize, size: usize) -> Result<(), IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if query.dimension() != self.dimension {
            return Err(IndexError::Dimension { expected: self.dimension, got: query.dimension() });
        }
        if size == 0 {
            return Err(IndexError::EmptyIndex);
        }
        Ok(())
    }

    /// Top-k with a bounded heap.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        let guard = self.entries.read().expect("index lock");
        self.check_query(query, k, guard.chunks.len())?;
        let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
        for (chunk, v) in guard.chunks.iter().zip(&guard.widened) {
            let score = cosine(query.components(), v);
            if heap.len() == k {
                let worst = &heap.peek().expect("k >= 1").0;
                let better = score > worst.score || (score == worst.score && chunk.chunk_id < worst.chunk_id);
                if !better {
                    continue;
                }
                heap.pop();
            }
            heap.push(Worst(SearchHit { chunk_id: chunk.chunk_id.clone(), score }));
        }
        let mut hits: Vec<SearchHit> = heap.into_iter().map(|w| w.0).collect();
        hits.sort_by(rank);
        Ok(hits)
    }

    /// Scores every entry and sorts. The oracle for [`VectorIndex::search`].
    pub fn brute_force_search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        let guard = self.entries.read().expect("index lock");
        self.check_query(query, k, guard.chunks.len())?;
        let mut hits: Vec<SearchHit> = guard
            .chunks
            .iter()
            .zip(&guard.widened)
            .map(|(c, v)| SearchHit { chunk_id: c.chunk_id.clone(), score: cosine(query.components(), v) })
            .collect();
        hits.sort_by(rank);
        hits.truncate(k);
        Ok(hits)
    }

    /// Embeds and indexes chunks in order. Chunks with no tokens are skipped
    /// and returned.
    pub fn index_chunks<'a>(
        &self,
        chunks: impl IntoIterator<Item = &'a Chunk>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<String>, IndexError> {
        let mut skipped = Vec::new();
        for chunk in chunks {
            let v = provider.embed(&chunk.text)?;
            match self.add_chunk(chunk, &v) {
                Err(IndexError::ZeroVector { chunk_id }) => skipped.push(chunk_id),
                other => other?,
            }
        }
        Ok(skipped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashingEmbedder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
        loop {
            let v = EmbeddingVector::normalized((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            if !v.is_zero() {
                return v;
            }
        }
    }

    #[test]
    fn self_retrieval_scores_one() {
        let e = HashingEmbedder::default();
        let idx = VectorIndex::new(256);
        let texts = ["HDL cholesterol", "growth hormone in children", "serum creatinine and GFR"];
        for (i, t) in texts.iter().enumerate() {
            idx.add(&format!("doc-a#{i:04}"), &e.embed_text(t)).unwrap();
        }
        for (i, t) in texts.iter().enumerate() {
            let hits = idx.search(&e.embed_text(t), 1).unwrap();
            assert_eq!(hits[0].chunk_id, format!("doc-a#{i:04}"));
            assert!((hits[0].score - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let e = HashingEmbedder::default();
        let idx = VectorIndex::new(256);
        assert!(matches!(idx.search(&e.embed_text("x"), 3), Err(IndexError::EmptyIndex)));
        assert!(matches!(idx.add("a#0000", &e.embed_text("")), Err(IndexError::ZeroVector { .. })));
        idx.add("a#0000", &e.embed_text("x")).unwrap();
        assert!(matches!(idx.add("a#0000", &e.embed_text("y")), Err(IndexError::Duplicate { .. })));
        assert!(matches!(idx.add("a#0001", &HashingEmbedder::new(8).embed_text("y")), Err(IndexError::Dimension { expected: 256, got: 8 })));
        assert!(matches!(idx.search(&e.embed_text("x"), 0), Err(IndexError::InvalidK)));
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.entries()[0].doc_id, "a");
    }

    #[test]
    fn thousand_chunks_and_large_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx = VectorIndex::new(32);
        for i in 0..1000 {
            idx.add(&format!("c{i:04}"), &random_vector(&mut rng, 32)).unwrap();
        }
        assert_eq!(idx.len(), 1000);
        let q = random_vector(&mut rng, 32);
        let all = idx.search(&q, 5000).unwrap();
        assert_eq!(all.len(), 1000);
        assert!(all.windows(2).all(|w| rank(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn ties_break_by_chunk_id() {
        let e = HashingEmbedder::default();
        let idx = VectorIndex::new(256);
        let v = e.embed_text("thyroid stimulating hormone");
        for id in ["z#0000", "b#0000", "m#0000"] {
            idx.add(id, &v).unwrap();
        }
        let hits = idx.search(&v, 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.chunk_id.as_str()).collect::<Vec<_>>(), ["b#0000", "m#0000"]);
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let idx = VectorIndex::new(64);
        for i in 0..1000 {
            // Duplicated vectors exercise the tie rule.
            let v = random_vector(&mut rng, 64);
            idx.add(&format!("c{i:04}"), &v).unwrap();
            if i % 100 == 0 {
                idx.add(&format!("d{i:04}"), &v).unwrap();
            }
        }
        for _ in 0..50 {
            let q = random_vector(&mut rng, 64);
            let k = 10;
            assert_eq!(idx.search(&q, k).unwrap(), idx.brute_force_search(&q, k).unwrap());
        }
    }

    #[test]
    fn add_is_visible_to_concurrent_readers() {
        let e = HashingEmbedder::default();
        let idx = Arc::new(VectorIndex::new(256));
        idx.add("seed#0000", &e.embed_text("seed")).unwrap();
        let writer = {
            let idx = Arc::clone(&idx);
            std::thread::spawn(move || {
                for i in 0..200 {
                    idx.add(&format!("w#{i:04}"), &e.embed_text(&format!("term{i}"))).unwrap();
                }
            })
        };
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let idx = Arc::clone(&idx);
                std::thread::spawn(move || {
                    for _ in 0..100 {
                        let before = idx.len();
                        let hits = idx.search(&e.embed_text("seed"), 1000).unwrap();
                        assert!(hits.len() >= before);
                    }
                })
            })
            .collect();
        writer.join().unwrap();
        for r in readers {
            r.join().unwrap();
        }
        let hits = idx.search(&e.embed_text("term199"), 1).unwrap();
        assert_eq!(hits[0].chunk_id, "w#0199");
    }
}
