use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    align_candidates, build_prompt, parse_model_output, prompt_digest, sha256_hex, CandidateTriple, ExtractionError,
    ExtractionIntent, ModelProvider, ParseIssue, PromptTemplate, ProviderIdentity, Rejected,
};
use crate::corpus::Chunk;
use crate::graph::ExtractorId;
use crate::ontology::OntologySchema;
use crate::retrieval::{EmbeddingProvider, SearchHit, VectorIndex, DEFAULT_TOP_K};

/// The chunk index plus the embedder that built it and the chunk texts.
#[derive(Clone)]
pub struct Retriever {
    index: Arc<VectorIndex>,
    embedder: Arc<dyn EmbeddingProvider>,
    chunks: BTreeMap<String, Chunk>,
}

impl Retriever {
    pub fn new(index: Arc<VectorIndex>, embedder: Arc<dyn EmbeddingProvider>, chunks: impl IntoIterator<Item = Chunk>) -> Self {
        let chunks = chunks.into_iter().map(|c| (c.chunk_id.clone(), c)).collect();
        Retriever { index, embedder, chunks }
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunks.get(chunk_id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    /// Top-k chunks for `query`. Indexed chunks missing from the text store
    /// are an error: the prompt could not show them.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(SearchHit, &Chunk)>, ExtractionError> {
        let v = self.embedder.embed(query).map_err(|source| ExtractionError::Provider { source, batch: None })?;
        let hits = self.index.search(&v, k)?;
        hits.into_iter()
            .map(|h| match self.chunks.get(&h.chunk_id) {
                Some(c) => Ok((h, c)),
                None => Err(ExtractionError::Intent(format!("indexed chunk {} has no text", h.chunk_id))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub top_k: usize,
    pub prompt_budget: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { top_k: DEFAULT_TOP_K, prompt_budget: super::DEFAULT_PROMPT_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BatchStatus {
    Completed,
    Failed { error: String },
}

/// One retrieval, prompt and completion, with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionBatch {
    pub batch_id: String,
    pub intent_id: String,
    pub template_id: String,
    pub template_version: u32,
    pub provider: ProviderIdentity,
    pub prompt_sha256: String,
    pub retrieved: Vec<SearchHit>,
    /// Records parsed from the completion; equals aligned plus rejected.
    pub candidate_count: usize,
    pub aligned: Vec<CandidateTriple>,
    pub rejected: Vec<Rejected>,
    pub issues: Vec<ParseIssue>,
    pub status: BatchStatus,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl ExtractionBatch {
    pub fn extractor(&self) -> ExtractorId {
        ExtractorId { template_id: self.template_id.clone(), version: self.template_version, provider: self.provider.to_string() }
    }

    pub fn retrieved_ids(&self) -> BTreeSet<String> {
        self.retrieved.iter().map(|h| h.chunk_id.clone()).collect()
    }

    /// Equality ignoring wall-clock timestamps.
    pub fn same_outcome(&self, other: &ExtractionBatch) -> bool {
        let strip = |b: &ExtractionBatch| ExtractionBatch { started_at: DateTime::UNIX_EPOCH, finished_at: DateTime::UNIX_EPOCH, ..b.clone() };
        strip(self) == strip(other)
    }
}

/// Retrieve, prompt, complete, parse, align. A provider failure returns the
/// failed batch inside the error; parse failures are recorded as issues.
pub fn run_extraction(
    intent: &ExtractionIntent,
    retriever: &Retriever,
    provider: &dyn ModelProvider,
    template: &PromptTemplate,
    schema: &OntologySchema,
    config: &ExtractionConfig,
) -> Result<ExtractionBatch, ExtractionError> {
    let started_at = Utc::now();
    intent.check(schema)?;
    let hits = retriever.retrieve(&intent.query_text, config.top_k)?;
    let chunks: Vec<Chunk> = hits.iter().map(|(_, c)| (*c).clone()).collect();
    let prompt = build_prompt(template, schema, &chunks, intent, config.prompt_budget)?;
    let digest = prompt_digest(&prompt);
    let identity = provider.identity();
    let batch_id = format!(
        "b-{}",
        &sha256_hex(format!("{}\0{}\0{}\0{identity}\0{digest}", intent.intent_id, template.template_id, template.version).as_bytes())[..16]
    );
    let mut batch = ExtractionBatch {
        batch_id,
        intent_id: intent.intent_id.clone(),
        template_id: template.template_id.clone(),
        template_version: template.version,
        provider: identity,
        prompt_sha256: digest,
        retrieved: hits.into_iter().map(|(h, _)| h).collect(),
        candidate_count: 0,
        aligned: Vec::new(),
        rejected: Vec::new(),
        issues: Vec::new(),
        status: BatchStatus::Completed,
        started_at,
        finished_at: started_at,
    };
    let completion = match provider.complete(&prompt) {
        Ok(c) => c,
        Err(source) => {
            batch.status = BatchStatus::Failed { error: source.to_string() };
            batch.finished_at = Utc::now();
            return Err(ExtractionError::Provider { source, batch: Some(Box::new(batch)) });
        }
    };
    let (candidates, issues) = parse_model_output(&completion);
    batch.candidate_count = candidates.len();
    let alignment = align_candidates(schema, candidates, Some(&batch.retrieved_ids()));
    batch.aligned = alignment.aligned;
    batch.rejected = alignment.rejected;
    batch.issues = issues;
    batch.finished_at = Utc::now();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::MockProvider;
    use crate::retrieval::{HashingEmbedder, IndexError};

    const BODY: &str = "{ontology_summary}\n---\n{intent}\n---\n{chunks}\n";

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: id.split('#').next().unwrap().into(),
            text: text.into(),
            span: (0, text.len()),
            section_path: vec![],
            approx_token_count: text.split_whitespace().count(),
        }
    }

    fn setup() -> (Retriever, ExtractionIntent, PromptTemplate) {
        let e = Arc::new(HashingEmbedder::default());
        let idx = Arc::new(VectorIndex::new(256));
        let chunks = vec![
            chunk("doc-a#0000", "HDL cholesterol below 40 mg/dL in men raises coronary heart disease risk."),
            chunk("doc-b#0000", "Growth hormone testing in children of short stature."),
        ];
        idx.index_chunks(&chunks, e.as_ref()).unwrap();
        let intent = ExtractionIntent {
            intent_id: "hdl".into(),
            target_entity_types: Default::default(),
            target_relations: Default::default(),
            focus_indicator: None,
            query_text: "HDL cholesterol coronary".into(),
        };
        (Retriever::new(idx, e, chunks), intent, PromptTemplate::new("base", 1, BODY, None).unwrap())
    }

    fn prompt_for(r: &Retriever, i: &ExtractionIntent, t: &PromptTemplate, k: usize) -> String {
        let chunks: Vec<Chunk> = r.retrieve(&i.query_text, k).unwrap().into_iter().map(|(_, c)| c.clone()).collect();
        build_prompt(t, OntologySchema::builtin(), &chunks, i, 8000).unwrap()
    }

    const CANNED: &str = r#"[
      {"subject": "HDL", "subject_type": "ClinicalIndicator", "relation": "indicates_risk_of",
       "object": "Coronary heart disease", "object_type": "Disease", "attributes": {"reference_range": "Male: >40 mg/dL"},
       "provenance": ["doc-a#0000"]},
      {"subject": "HDL", "subject_type": "ClinicalIndicator", "relation": "associated_with",
       "object": "Short stature", "object_type": "Disease", "attributes": {}, "provenance": ["doc-z#0000"]},
      {"subject": "HDL", "subject_type": "ClinicalIndicator", "object": "x", "object_type": "Disease", "attributes": {}, "provenance": ["doc-a#0000"]}
    ]"#;

    #[test]
    fn mock_batch_replays() {
        let (r, i, t) = setup();
        let cfg = ExtractionConfig { top_k: 1, ..Default::default() };
        let mock = MockProvider::from_prompts([(prompt_for(&r, &i, &t, 1).as_str(), CANNED)]);
        let a = run_extraction(&i, &r, &mock, &t, OntologySchema::builtin(), &cfg).unwrap();
        assert_eq!(a.retrieved.len(), 1);
        assert_eq!(a.retrieved[0].chunk_id, "doc-a#0000");
        assert_eq!(a.candidate_count, 2);
        assert_eq!(a.candidate_count, a.aligned.len() + a.rejected.len());
        assert_eq!(a.aligned.len(), 1);
        assert!(matches!(a.rejected[0].violations[0], crate::ontology::Violation::UnknownChunk { .. }));
        assert_eq!(a.issues.len(), 1);
        let ids = a.retrieved_ids();
        assert!(a.aligned.iter().all(|t| t.provenance.iter().all(|p| ids.contains(p))));
        let b = run_extraction(&i, &r, &mock, &t, OntologySchema::builtin(), &cfg).unwrap();
        assert!(a.same_outcome(&b));
        assert_eq!(a.extractor().version, 1);
    }

    #[test]
    fn empty_completion() {
        let (r, i, t) = setup();
        let mock = MockProvider::from_prompts([(prompt_for(&r, &i, &t, 8).as_str(), "")]);
        let b = run_extraction(&i, &r, &mock, &t, OntologySchema::builtin(), &ExtractionConfig::default()).unwrap();
        assert_eq!(b.candidate_count, 0);
        assert_eq!(b.issues.len(), 1);
        assert_eq!(b.retrieved.len(), 2);
    }

    #[test]
    fn provider_failure_marks_batch() {
        let (r, i, t) = setup();
        let mock = MockProvider::from_prompts([]);
        let err = run_extraction(&i, &r, &mock, &t, OntologySchema::builtin(), &ExtractionConfig::default()).unwrap_err();
        let ExtractionError::Provider { batch: Some(b), .. } = err else { panic!("{err:?}") };
        assert!(matches!(b.status, BatchStatus::Failed { .. }));
    }

    #[test]
    fn empty_index_fails_before_provider() {
        struct Panics;
        impl ModelProvider for Panics {
            fn identity(&self) -> ProviderIdentity {
                ProviderIdentity::new("panics", "x", &serde_json::Value::Null)
            }
            fn complete(&self, _: &str) -> Result<String, crate::retrieval::ProviderError> {
                panic!("provider must not be called")
            }
        }
        let (_, i, t) = setup();
        let r = Retriever::new(Arc::new(VectorIndex::new(256)), Arc::new(HashingEmbedder::default()), vec![]);
        let err = run_extraction(&i, &r, &Panics, &t, OntologySchema::builtin(), &ExtractionConfig::default()).unwrap_err();
        assert!(matches!(err, ExtractionError::Index(IndexError::EmptyIndex)));
    }

    #[test]
    fn new_template_version_is_recorded() {
        let (r, i, _) = setup();
        let mut reg = crate::extraction::TemplateRegistry::new();
        reg.register(PromptTemplate::new("base", 1, BODY, None).unwrap()).unwrap();
        let v2 = reg.revise("base", &format!("Cite chunk ids.\n{BODY}"), Some("fb-1")).unwrap();
        let mock = MockProvider::from_prompts([(prompt_for(&r, &i, &v2, 8).as_str(), "[]")]);
        let b = run_extraction(&i, &r, &mock, &v2, OntologySchema::builtin(), &ExtractionConfig::default()).unwrap();
        assert_eq!(b.template_version, 2);
        assert_eq!(b.extractor().version, 2);
    }
}
