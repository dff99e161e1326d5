use super::{ExtractionError, ExtractionIntent, PromptTemplate, PLACEHOLDERS};
use crate::corpus::Chunk;
use crate::ontology::OntologySchema;

pub const DEFAULT_PROMPT_BUDGET: usize = 8000;

/// Marker line that precedes each chunk; models echo the id as provenance.
pub fn chunk_marker(chunk_id: &str) -> String {
    format!("[[chunk:{chunk_id}]]")
}

pub fn render_chunks(chunks: &[Chunk]) -> String {
    let parts: Vec<String> = chunks.iter().map(|c| format!("{}\n{}", chunk_marker(&c.chunk_id), c.text.trim_end())).collect();
    parts.join("\n\n")
}

/// Whitespace-separated tokens: the unit of the prompt budget.
pub fn prompt_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Fills the three placeholders in one left-to-right pass, so placeholder-like
/// text inside a chunk is never expanded.
pub fn build_prompt(
    template: &PromptTemplate,
    schema: &OntologySchema,
    chunks: &[Chunk],
    intent: &ExtractionIntent,
    budget: usize,
) -> Result<String, ExtractionError> {
    if chunks.is_empty() {
        return Err(ExtractionError::NoChunks);
    }
    let types: Vec<&str> = intent.target_entity_types.iter().map(String::as_str).collect();
    let relations: Vec<&str> = intent.target_relations.iter().map(String::as_str).collect();
    let values = [schema.summary_for(&types, &relations), render_chunks(chunks), intent.to_string()];

    let mut slots: Vec<(usize, usize)> = PLACEHOLDERS
        .iter()
        .enumerate()
        .map(|(i, p)| template.body.find(p).map(|at| (at, i)))
        .collect::<Option<_>>()
        .ok_or_else(|| ExtractionError::Template(format!("template {} lacks a placeholder", template.template_id)))?;
    slots.sort();
    let mut out = String::with_capacity(template.body.len() + values.iter().map(String::len).sum::<usize>());
    let mut cursor = 0;
    for (at, i) in slots {
        out.push_str(&template.body[cursor..at]);
        out.push_str(values[i].trim_end());
        cursor = at + PLACEHOLDERS[i].len();
    }
    out.push_str(&template.body[cursor..]);

    let actual = prompt_tokens(&out);
    if actual > budget {
        return Err(ExtractionError::PromptBudget { limit: budget, actual, overflow: actual - budget });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: id.split('#').next().unwrap().into(),
            text: text.into(),
            span: (0, text.len()),
            section_path: vec![],
            approx_token_count: prompt_tokens(text),
        }
    }

    fn fixture() -> (PromptTemplate, ExtractionIntent) {
        let t = PromptTemplate::new("t", 1, "Schema:\n{ontology_summary}\n\nTask:\n{intent}\n\nText:\n{chunks}\n", None).unwrap();
        let i = ExtractionIntent {
            intent_id: "i".into(),
            target_entity_types: ["ClinicalIndicator".to_string()].into(),
            target_relations: ["indicates_risk_of".to_string()].into(),
            focus_indicator: None,
            query_text: "HDL".into(),
        };
        (t, i)
    }

    #[test]
    fn three_markers_in_order() {
        let (t, i) = fixture();
        let chunks = [chunk("d#0002", "b"), chunk("d#0000", "a"), chunk("e#0001", "c {intent}")];
        let p = build_prompt(&t, OntologySchema::builtin(), &chunks, &i, DEFAULT_PROMPT_BUDGET).unwrap();
        let at: Vec<usize> = ["[[chunk:d#0002]]", "[[chunk:d#0000]]", "[[chunk:e#0001]]"].iter().map(|m| p.find(m).unwrap()).collect();
        assert!(at.windows(2).all(|w| w[0] < w[1]));
        assert!(p.contains("c {intent}"), "chunk text must not be expanded");
        assert!(p.contains("- indicates_risk_of: ClinicalIndicator -> Disease"));
        assert!(!p.contains("treats:"));
        assert_eq!(p, build_prompt(&t, OntologySchema::builtin(), &chunks, &i, DEFAULT_PROMPT_BUDGET).unwrap());
    }

    #[test]
    fn empty_chunks_rejected() {
        let (t, i) = fixture();
        assert!(matches!(build_prompt(&t, OntologySchema::builtin(), &[], &i, 100), Err(ExtractionError::NoChunks)));
    }

    #[test]
    fn budget_overflow_is_reported() {
        let (t, i) = fixture();
        let chunks = [chunk("d#0000", &"word ".repeat(500))];
        let full = build_prompt(&t, OntologySchema::builtin(), &chunks, &i, usize::MAX).unwrap();
        let n = prompt_tokens(&full);
        assert!(build_prompt(&t, OntologySchema::builtin(), &chunks, &i, n).is_ok());
        let err = build_prompt(&t, OntologySchema::builtin(), &chunks, &i, n - 7).unwrap_err();
        assert!(matches!(err, ExtractionError::PromptBudget { overflow: 7, .. }));
    }
}
