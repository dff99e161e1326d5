mod align;
mod batch;
mod candidate;
#[cfg(feature = "http-provider")]
mod http;
mod intent;
mod parse;
mod prompt;
mod provider;
mod template;

pub use align::{align_candidates, Alignment, Rejected};
pub use batch::{run_extraction, BatchStatus, ExtractionBatch, ExtractionConfig, Retriever};
pub use candidate::{CandidateAttribute, CandidateTriple, TripleStatus};
#[cfg(feature = "http-provider")]
pub use http::{completion_content, HttpProvider, HttpProviderConfig};
pub use intent::ExtractionIntent;
pub use parse::{parse_model_output, ParseIssue};
pub use prompt::{build_prompt, chunk_marker, prompt_tokens, render_chunks, DEFAULT_PROMPT_BUDGET};
pub use provider::{prompt_digest, sha256_hex, MockProvider, ModelProvider, ProviderError, ProviderIdentity};
pub use template::{check_body, PromptTemplate, TemplateRegistry, PLACEHOLDERS};

use std::path::Path;

use thiserror::Error;

use crate::retrieval::IndexError;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("no chunks to build a prompt from")]
    NoChunks,
    #[error("prompt has {actual} tokens, over the budget of {limit} by {overflow}")]
    PromptBudget { limit: usize, actual: usize, overflow: usize },
    #[error("template: {0}")]
    Template(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("intent: {0}")]
    Intent(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{source}")]
    Provider { source: ProviderError, batch: Option<Box<ExtractionBatch>> },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ExtractionError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        ExtractionError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
