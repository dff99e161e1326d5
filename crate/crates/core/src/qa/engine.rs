use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{answer, retrieve_context, Answer, Passages, QaError, QaMode, Question};
use crate::corpus::Chunk;
use crate::extraction::ModelProvider;
use crate::graph::GraphStore;
use crate::retrieval::{EmbeddingProvider, VectorIndex, DEFAULT_TOP_K};

pub const DEFAULT_HOP_LIMIT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRequest {
    pub text: String,
    #[serde(default)]
    pub mode: QaMode,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub hop_limit: Option<usize>,
}

/// Read-only; every question runs against its own graph snapshot.
#[derive(Clone)]
pub struct QaEngine {
    pub store: Arc<GraphStore>,
    pub index: Arc<VectorIndex>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub chunks: Arc<BTreeMap<String, Chunk>>,
    pub provider: Option<Arc<dyn ModelProvider>>,
}

impl QaEngine {
    pub fn ask(&self, req: &QaRequest) -> Result<Answer, QaError> {
        let q = Question::new(&req.text, req.mode)?;
        let graph = self.store.snapshot();
        let passages = Passages { index: &self.index, embedder: self.embedder.as_ref(), chunks: &self.chunks };
        let bundle = retrieve_context(&q, &graph, Some(passages), req.k.unwrap_or(DEFAULT_TOP_K), req.hop_limit.unwrap_or(DEFAULT_HOP_LIMIT))?;
        answer(&q, &bundle, self.provider.as_deref(), &graph)
    }
}
