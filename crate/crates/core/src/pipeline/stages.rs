use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::manifest::counts;
use super::workspace::{embedder, load_resources, model_provider};
use super::{PipelineConfig, PipelineError, RunManifest, Workspace};
use crate::corpus::{chunk_document, load_corpus, BoilerplateRules, Chunk, ControlledVocabulary, GuidelineDocument, Preprocessor};
use crate::extraction::{
    run_extraction, BatchStatus, ExtractionBatch, ExtractionConfig, ExtractionError, ExtractionIntent, Retriever, TemplateRegistry,
};
use crate::fusion::{fuse_into_store, FusionItem, FusionReport};
use crate::graph::{export_jsonl, GraphStats, GraphStore};
use crate::ontology::{check_graph_constraints, Violation};
use crate::qa::{Answer, QaRequest};
use crate::retrieval::VectorIndex;
use crate::review::{compute_stats, DecisionLog, ReviewStats};

/// Writes one JSON value per line via a temporary file and rename.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("record serializes");
        buf.push(b'\n');
    }
    fs::write(&tmp, buf).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// A missing file is reported as needing `stage` to run first.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Missing { path: path.display().to_string(), stage });
    }
    let f = fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::io(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, json + "\n").map_err(|e| PipelineError::io(path, e))
}

/// The work directory's registry, seeded from the configured file on first use.
pub(crate) fn load_templates(config: &PipelineConfig) -> Result<TemplateRegistry, PipelineError> {
    let live = config.work_templates_path();
    if !live.exists() {
        fs::create_dir_all(&config.work_dir).map_err(|e| PipelineError::io(&config.work_dir, e))?;
        let seed = TemplateRegistry::load(&config.templates).map_err(|e| PipelineError::Config(e.to_string()))?;
        seed.save(&live).map_err(PipelineError::stage("templates"))?;
    }
    TemplateRegistry::load(&live).map_err(PipelineError::stage("templates"))
}

fn batch_file_name(intent_id: &str) -> String {
    let safe: String = intent_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.json")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub chunks: usize,
    pub removed_spans: usize,
    pub substitutions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub indexed: usize,
    /// Chunks with no tokens to embed.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub batches: usize,
    pub aligned: usize,
    pub rejected: usize,
    pub parse_issues: usize,
    /// (intent id, error) for intents that produced no usable batch.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub graph: GraphStats,
    pub review: ReviewStats,
}

/// One invocation over a work directory. Each stage reads what earlier
/// stages wrote, so stages can run in separate processes.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub manifest: RunManifest,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        fs::create_dir_all(&config.work_dir).map_err(|e| PipelineError::io(&config.work_dir, e))?;
        let manifest = RunManifest::new(&config.digest());
        Ok(Pipeline { config, manifest })
    }

    /// Writes the run manifest; returns its path.
    pub fn finish(&self) -> Result<PathBuf, PipelineError> {
        self.manifest.save(&self.config.manifests_dir())
    }

    /// Loads, cleans and chunks the corpus. Documents seen before keep their
    /// original `ingested_at`.
    pub fn ingest(&mut self) -> Result<IngestSummary, PipelineError> {
        let config = &self.config;
        self.manifest.stage("ingest", || {
            let cfg = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
            let vocabulary = ControlledVocabulary::load(&config.vocabulary).map_err(|e| cfg(&e))?;
            let rules = match &config.boilerplate {
                Some(p) => BoilerplateRules::load(p).map_err(|e| cfg(&e))?,
                None => BoilerplateRules::builtin().clone(),
            };
            let pre = Preprocessor::new(rules, vocabulary);
            let mut docs = load_corpus(&config.corpus_dir).map_err(PipelineError::stage("ingest"))?;
            let previous: BTreeMap<String, GuidelineDocument> = if config.documents_path().exists() {
                read_jsonl::<GuidelineDocument>(&config.documents_path(), "ingest")?
                    .into_iter()
                    .map(|d| (d.doc_id.clone(), d))
                    .collect()
            } else {
                BTreeMap::new()
            };
            let mut chunks = Vec::new();
            let (mut removed, mut substitutions) = (0, 0);
            for doc in &mut docs {
                if let Some(prev) = previous.get(&doc.doc_id) {
                    doc.ingested_at = prev.ingested_at;
                }
                let nd = pre.run(doc);
                removed += nd.removed_spans.len();
                substitutions += nd.substitutions.len();
                chunks.extend(chunk_document(&nd, config.chunk_policy).map_err(PipelineError::stage("ingest"))?);
            }
            write_jsonl(&config.documents_path(), &docs)?;
            write_jsonl(&config.chunks_path(), &chunks)?;
            let s = IngestSummary { documents: docs.len(), chunks: chunks.len(), removed_spans: removed, substitutions };
            let c = counts([("documents", s.documents), ("chunks", s.chunks), ("removed_spans", removed), ("substitutions", substitutions)]);
            Ok((s, c))
        })
    }

    /// Embeds every chunk into a fresh index file.
    pub fn index(&mut self) -> Result<IndexSummary, PipelineError> {
        let config = &self.config;
        self.manifest.stage("index", || {
            let chunks: Vec<Chunk> = read_jsonl(&config.chunks_path(), "ingest")?;
            let e = embedder(config);
            let index = VectorIndex::new(config.embedding.dimension());
            let skipped = index.index_chunks(&chunks, e.as_ref()).map_err(PipelineError::stage("index"))?;
            index.save(&config.index_path()).map_err(PipelineError::stage("index"))?;
            let s = IndexSummary { indexed: index.len(), skipped };
            let c = counts([("indexed", s.indexed), ("skipped", s.skipped.len())]);
            Ok((s, c))
        })
    }

    pub fn intents(&self) -> Result<Vec<ExtractionIntent>, PipelineError> {
        let text = fs::read_to_string(&self.config.intents).map_err(|e| PipelineError::io(&self.config.intents, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", self.config.intents.display())))
    }

    /// Runs each intent (or just `only`) against the latest version of the
    /// configured template and writes `batches/<intent>.json`. Failures do
    /// not stop other intents; the stage fails afterwards if any occurred.
    pub fn extract(&mut self, only: Option<&str>) -> Result<ExtractSummary, PipelineError> {
        let mut intents = self.intents()?;
        if let Some(id) = only {
            intents.retain(|i| i.intent_id == id);
            if intents.is_empty() {
                return Err(PipelineError::Config(format!("no intent named {id:?}")));
            }
        }
        let config = &self.config;
        self.manifest.stage("extract", || {
            let documents: Vec<GuidelineDocument> = read_jsonl(&config.documents_path(), "ingest")?;
            let chunks: Vec<Chunk> = read_jsonl(&config.chunks_path(), "ingest")?;
            let index_path = config.index_path();
            if !index_path.exists() {
                return Err(PipelineError::Missing { path: index_path.display().to_string(), stage: "index" });
            }
            let index = VectorIndex::load(&index_path).map_err(PipelineError::stage("extract"))?;
            let resources = load_resources(config, &documents)?;
            let registry = load_templates(config)?;
            let template = registry
                .latest(&config.template_id)
                .ok_or_else(|| PipelineError::Config(format!("no template named {:?}", config.template_id)))?;
            let provider = model_provider(config)?;
            let retriever = Retriever::new(Arc::new(index), embedder(config), chunks);
            let xc = ExtractionConfig { top_k: config.retrieval_k, prompt_budget: config.prompt_budget };
            let dir = config.batches_dir();
            fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;

            let mut s = ExtractSummary { batches: 0, aligned: 0, rejected: 0, parse_issues: 0, failures: Vec::new() };
            for intent in &intents {
                let batch: ExtractionBatch =
                    match run_extraction(intent, &retriever, provider.as_ref(), template, &resources.schema, &xc) {
                        Ok(b) => b,
                        Err(ExtractionError::Provider { source, batch }) => {
                            s.failures.push((intent.intent_id.clone(), source.to_string()));
                            match batch {
                                Some(b) => *b,
                                None => continue,
                            }
                        }
                        Err(e) => {
                            s.failures.push((intent.intent_id.clone(), e.to_string()));
                            continue;
                        }
                    };
                write_json(&dir.join(batch_file_name(&intent.intent_id)), &batch)?;
                if batch.status == BatchStatus::Completed {
                    s.batches += 1;
                    s.aligned += batch.aligned.len();
                    s.rejected += batch.rejected.len();
                    s.parse_issues += batch.issues.len();
                }
            }
            if !s.failures.is_empty() {
                let list: Vec<String> = s.failures.iter().map(|(i, e)| format!("{i}: {e}")).collect();
                return Err(PipelineError::Stage { stage: "extract", message: list.join("; ") });
            }
            let c = counts([
                ("batches", s.batches),
                ("aligned", s.aligned),
                ("rejected", s.rejected),
                ("parse_issues", s.parse_issues),
            ]);
            Ok((s, c))
        })
    }

    /// Completed batches in file-name order.
    pub fn batches(&self) -> Result<Vec<ExtractionBatch>, PipelineError> {
        let dir = self.config.batches_dir();
        if !dir.is_dir() {
            return Err(PipelineError::Missing { path: dir.display().to_string(), stage: "extract" });
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| PipelineError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
            let b: ExtractionBatch = serde_json::from_str(&text).map_err(|e| PipelineError::io(&p, e))?;
            if b.status == BatchStatus::Completed {
                out.push(b);
            }
        }
        Ok(out)
    }

    fn open_store(&self, schema_version: &str) -> Result<GraphStore, PipelineError> {
        GraphStore::open(&self.config.graph_path(), schema_version).map_err(PipelineError::stage("graph"))
    }

    /// Fuses every completed batch into the graph file and writes the report.
    /// Fusing the same batches again changes nothing.
    pub fn fuse(&mut self) -> Result<FusionReport, PipelineError> {
        let batches = self.batches()?;
        let documents: Vec<GuidelineDocument> = read_jsonl(&self.config.documents_path(), "ingest")?;
        let resources = load_resources(&self.config, &documents)?;
        let store = self.open_store(&resources.schema.version.to_string())?;
        let config = &self.config;
        self.manifest.stage("fuse", || {
            let items: Vec<FusionItem> = batches.iter().flat_map(FusionItem::from_batch).collect();
            let report = fuse_into_store(&store, &items, &resources.context()).map_err(PipelineError::stage("fuse"))?;
            store.checkpoint().map_err(PipelineError::stage("fuse"))?;
            write_json(&config.fusion_report_path(), &report)?;
            let c = counts([
                ("items", report.input_count),
                ("merged", report.merged_count),
                ("duplicates", report.duplicates_removed),
                ("superseded", report.superseded_count),
                ("escalated", report.escalated_count),
                ("unaligned", report.unaligned_count),
                ("violations", report.violations.len()),
            ]);
            Ok((report, c))
        })
    }

    /// Ingest, index, extract and fuse in one go.
    pub fn build(&mut self) -> Result<FusionReport, PipelineError> {
        self.ingest()?;
        self.index()?;
        self.extract(None)?;
        self.fuse()
    }

    /// Constraint violations over the current graph.
    pub fn validate_graph(&mut self) -> Result<Vec<Violation>, PipelineError> {
        let documents: Vec<GuidelineDocument> = read_jsonl(&self.config.documents_path(), "ingest")?;
        let resources = load_resources(&self.config, &documents)?;
        let store = self.existing_store(&resources.schema.version.to_string())?;
        self.manifest.stage("validate", || {
            let v = check_graph_constraints(&resources.schema, &store.snapshot());
            let c = counts([("violations", v.len())]);
            Ok((v, c))
        })
    }

    fn existing_store(&self, schema_version: &str) -> Result<GraphStore, PipelineError> {
        let path = self.config.graph_path();
        if !path.exists() {
            return Err(PipelineError::Missing { path: path.display().to_string(), stage: "fuse" });
        }
        self.open_store(schema_version)
    }

    /// Canonical JSON Lines export of the graph, including pending WAL writes.
    pub fn export(&mut self, out: &mut dyn Write) -> Result<usize, PipelineError> {
        let store = self.existing_store(&crate::ontology::OntologySchema::builtin().version.to_string())?;
        self.manifest.stage("export", || {
            let g = store.snapshot();
            let mut w = std::io::BufWriter::new(out);
            export_jsonl(&g, &mut w).and_then(|_| w.flush()).map_err(PipelineError::stage("export"))?;
            let n = g.node_count() + g.edge_count();
            Ok((n, counts([("nodes", g.node_count()), ("edges", g.edge_count())])))
        })
    }

    pub fn stats(&mut self) -> Result<StatsReport, PipelineError> {
        let store = self.existing_store(&crate::ontology::OntologySchema::builtin().version.to_string())?;
        let log = DecisionLog::open(&self.config.decision_log_path()).map_err(PipelineError::stage("stats"))?;
        self.manifest.stage("stats", || {
            let graph = store.snapshot().stats();
            let review = compute_stats(log.decisions());
            let c = counts([("nodes", graph.node_count), ("edges", graph.edge_count), ("reviewed", review.reviewed as usize)]);
            Ok((StatsReport { graph, review }, c))
        })
    }

    pub fn ask(&mut self, request: &QaRequest) -> Result<Answer, PipelineError> {
        let ws = Workspace::open(self.config.clone())?;
        self.manifest.stage("qa", || {
            let a = ws.qa_engine().ask(request).map_err(PipelineError::stage("qa"))?;
            let c = counts([("claims", a.claims.len()), ("cited_edges", a.cited_edge_ids.len())]);
            Ok((a, c))
        })
    }
}
