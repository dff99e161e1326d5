//! Rewrites `fixtures/table1/mock/` so the mock model answers every intent in
//! `fixtures/table1/intents.json` with the facts of its `table1.tsv` row.
//!
//! Responses are keyed by prompt digest, so rerun this after any change to
//! the corpus, chunking, template, schema summary or retrieval settings:
//!
//!     cargo run -p medkg --example regen_mock_fixtures

use std::fs;
use std::path::Path;
use std::sync::Arc;

use medkg::corpus::{Chunk, GuidelineDocument};
use medkg::extraction::{build_prompt, MockProvider, Retriever};
use medkg::ontology::LITERAL;
use medkg::pipeline::{read_jsonl, Pipeline, PipelineConfig};
use medkg::retrieval::{HashingEmbedder, VectorIndex};
use serde_json::json;

struct Row {
    guideline: String,
    indicator: String,
    range: String,
    direct: Vec<String>,
    indirect: Vec<String>,
}

fn rows(dir: &Path) -> Vec<Row> {
    let text = fs::read_to_string(dir.join("table1.tsv")).expect("table1.tsv");
    medkg::tsv::records(&text)
        .map(|r| {
            let split = |s: &str| s.split(',').map(|d| d.trim().to_string()).collect();
            Row {
                guideline: r.fields[1].into(),
                indicator: r.fields[2].into(),
                range: r.fields[3].into(),
                direct: split(r.fields[4]),
                indirect: split(r.fields[5]),
            }
        })
        .collect()
}

/// The section heading names the indicator, possibly without its abbreviation.
fn about(chunk: &Chunk, indicator: &str) -> bool {
    chunk.section_path.last().is_some_and(|h| indicator.to_lowercase().starts_with(&h.to_lowercase()))
}

fn main() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/table1");
    let work = tempfile::tempdir().expect("temp dir");
    let mut config = PipelineConfig::load(&fixture.join("pipeline.json")).expect("config");
    config.work_dir = work.path().to_path_buf();
    let mock_dir = match &config.model {
        medkg::pipeline::ModelConfig::Mock { dir } => dir.clone(),
        #[allow(unreachable_patterns)]
        _ => panic!("fixture config must use the mock provider"),
    };

    let mut pipeline = Pipeline::new(config.clone()).expect("valid config");
    pipeline.ingest().expect("ingest");
    pipeline.index().expect("index");
    let docs: Vec<GuidelineDocument> = read_jsonl(&config.documents_path(), "ingest").unwrap();
    let chunks: Vec<Chunk> = read_jsonl(&config.chunks_path(), "ingest").unwrap();
    let index = VectorIndex::load(&config.index_path()).unwrap();
    let retriever = Retriever::new(Arc::new(index), Arc::new(HashingEmbedder::new(config.embedding.dimension())), chunks);
    let schema = medkg::pipeline::load_resources(&config, &docs).unwrap().schema;
    let registry = medkg::extraction::TemplateRegistry::load(&config.templates).unwrap();
    let template = registry.latest(&config.template_id).expect("template");
    let rows = rows(&fixture);

    for entry in fs::read_dir(&mock_dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "txt") {
            fs::remove_file(p).unwrap();
        }
    }
    for intent in pipeline.intents().unwrap() {
        let focus = intent.focus_indicator.as_deref().expect("intent names its indicator");
        let row = rows.iter().find(|r| r.indicator == focus).unwrap_or_else(|| panic!("no row for {focus}"));
        let hits = retriever.retrieve(&intent.query_text, config.retrieval_k).unwrap();
        let retrieved: Vec<Chunk> = hits.iter().map(|(_, c)| (*c).clone()).collect();
        let source = retrieved
            .iter()
            .find(|c| docs.iter().any(|d| d.doc_id == c.doc_id && d.issuing_org == row.guideline) && about(c, focus))
            .unwrap_or_else(|| panic!("{}: no retrieved chunk from {} about {focus}", intent.intent_id, row.guideline));
        let prov = [source.chunk_id.as_str()];
        let record = |relation: &str, object: &str, object_type: &str| {
            json!({
                "subject": focus, "subject_type": "ClinicalIndicator", "relation": relation,
                "object": object, "object_type": object_type, "attributes": {}, "provenance": prov,
            })
        };
        let mut out = vec![record("has_reference_range", &row.range, LITERAL)];
        out.extend(row.direct.iter().map(|d| record("indicates_risk_of", d, "Disease")));
        out.extend(row.indirect.iter().map(|d| record("associated_with", d, "Disease")));
        let prompt = build_prompt(template, &schema, &retrieved, &intent, config.prompt_budget).expect("prompt fits");
        let body = serde_json::to_string_pretty(&out).unwrap();
        fs::write(MockProvider::response_path(&mock_dir, &prompt), body + "\n").unwrap();
        println!("{}: cites {}", intent.intent_id, source.chunk_id);
    }
}
