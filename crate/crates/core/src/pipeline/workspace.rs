use std::collections::BTreeMap;
use std::fs;
use std::sync::Arc;

use super::stages::{load_templates, read_jsonl};
use super::{ModelConfig, PipelineConfig, PipelineError};
use crate::corpus::{Chunk, GuidelineDocument};
#[cfg(feature = "http-provider")]
use crate::extraction::HttpProvider;
use crate::extraction::{MockProvider, ModelProvider};
use crate::fusion::{AliasTable, FusionResources, SourceCatalog, SourcePriority};
use crate::graph::GraphStore;
use crate::ontology::{load_schema, CodeLookup, OntologySchema};
use crate::qa::QaEngine;
use crate::range::UnitTable;
use crate::retrieval::{EmbeddingProvider, HashingEmbedder, VectorIndex};
use crate::review::{DecisionLog, ReviewService};

/// Schema, lookup tables and the document catalog.
pub fn load_resources(config: &PipelineConfig, documents: &[GuidelineDocument]) -> Result<FusionResources, PipelineError> {
    let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
    let schema = match &config.schema {
        Some(p) => load_schema(p).map_err(|e| cfg(&e))?,
        None => OntologySchema::builtin().clone(),
    };
    let units = match &config.units {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
            UnitTable::parse(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
        }
        None => UnitTable::builtin().clone(),
    };
    Ok(FusionResources {
        schema,
        aliases: AliasTable::load(&config.aliases).map_err(|e| cfg(&e))?,
        priority: SourcePriority::load(&config.priority).map_err(|e| cfg(&e))?,
        codes: CodeLookup::load(&config.codes).map_err(|e| cfg(&e))?,
        catalog: SourceCatalog::from_documents(documents),
        units,
    })
}

pub(crate) fn embedder(config: &PipelineConfig) -> Arc<dyn EmbeddingProvider> {
    Arc::new(HashingEmbedder::new(config.embedding.dimension()))
}

pub(crate) fn model_provider(config: &PipelineConfig) -> Result<Arc<dyn ModelProvider>, PipelineError> {
    Ok(match &config.model {
        ModelConfig::Mock { dir } => Arc::new(MockProvider::from_dir(dir)),
        #[cfg(feature = "http-provider")]
        ModelConfig::Http(h) => Arc::new(HttpProvider::new(h.clone()).map_err(|e| PipelineError::Config(e.to_string()))?),
    })
}

/// Everything the query and review services share, loaded from a work
/// directory the batch stages have populated.
#[derive(Clone)]
pub struct Workspace {
    pub config: PipelineConfig,
    pub resources: Arc<FusionResources>,
    pub store: Arc<GraphStore>,
    pub index: Arc<VectorIndex>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub chunks: Arc<BTreeMap<String, Chunk>>,
    pub provider: Option<Arc<dyn ModelProvider>>,
}

impl Workspace {
    pub fn open(config: PipelineConfig) -> Result<Self, PipelineError> {
        let documents: Vec<GuidelineDocument> = read_jsonl(&config.documents_path(), "ingest")?;
        let chunks: Vec<Chunk> = read_jsonl(&config.chunks_path(), "ingest")?;
        let index_path = config.index_path();
        if !index_path.exists() {
            return Err(PipelineError::Missing { path: index_path.display().to_string(), stage: "index" });
        }
        let index = VectorIndex::load(&index_path).map_err(PipelineError::stage("index"))?;
        if index.dimension() != config.embedding.dimension() {
            return Err(PipelineError::Config(format!(
                "index has dimension {}, config asks for {}; rerun `index`",
                index.dimension(),
                config.embedding.dimension()
            )));
        }
        let resources = load_resources(&config, &documents)?;
        let graph_path = config.graph_path();
        if !graph_path.exists() {
            return Err(PipelineError::Missing { path: graph_path.display().to_string(), stage: "fuse" });
        }
        let store = GraphStore::open(&graph_path, &resources.schema.version.to_string()).map_err(PipelineError::stage("graph"))?;
        Ok(Workspace {
            embedder: embedder(&config),
            provider: model_provider(&config).ok(),
            config,
            resources: Arc::new(resources),
            store: Arc::new(store),
            index: Arc::new(index),
            chunks: Arc::new(chunks.into_iter().map(|c| (c.chunk_id.clone(), c)).collect()),
        })
    }

    pub fn qa_engine(&self) -> QaEngine {
        QaEngine {
            store: self.store.clone(),
            index: self.index.clone(),
            embedder: self.embedder.clone(),
            chunks: self.chunks.clone(),
            provider: self.provider.clone(),
        }
    }

    /// Review queue over the shared store, backed by the decision log and the
    /// work directory's template registry.
    pub fn review_service(&self) -> Result<ReviewService, PipelineError> {
        let log = DecisionLog::open(&self.config.decision_log_path()).map_err(PipelineError::stage("review"))?;
        let templates = load_templates(&self.config)?;
        Ok(ReviewService::new(self.store.clone(), self.resources.clone(), self.chunks.clone(), log, templates)
            .persist_templates(&self.config.work_templates_path()))
    }
}
