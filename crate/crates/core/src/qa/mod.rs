//! Question answering over the asserted graph plus retrieved passages.
//!
//! Grounded mode composes answers from fixed sentence templates, so it runs
//! offline and every sentence carries the edge or chunk ids it rests on.
//! Multi-hop answers report association paths only, never causal claims.

mod compose;
mod context;
mod engine;

pub use compose::{answer, answer_generative, answer_grounded, classify, generative_prompt, relation_phrase, QuestionKind};
pub use context::{find_seeds, retrieve_context, ChunkHit, ContextBundle, Passages, MAX_HOP_LIMIT};
pub use engine::{QaEngine, QaRequest, DEFAULT_HOP_LIMIT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::{IndexError, ProviderError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaMode {
    #[default]
    Grounded,
    Generative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub mode: QaMode,
}

impl Question {
    pub fn new(text: &str, mode: QaMode) -> Result<Self, QaError> {
        if text.trim().is_empty() {
            return Err(QaError::EmptyQuestion);
        }
        Ok(Question { text: text.trim().to_string(), mode })
    }
}

/// One sentence of an answer and the evidence behind it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub edge_ids: Vec<String>,
    pub chunk_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub claims: Vec<Claim>,
    /// Entity ids the answer names as its result, e.g. the diseases asked for.
    pub answer_entities: Vec<String>,
    pub cited_edge_ids: Vec<String>,
    pub cited_chunk_ids: Vec<String>,
    /// Largest distance from a seed to a cited edge.
    pub hops_used: usize,
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("no graph entity matched the question and no passage was retrieved")]
    NoContext,
    #[error("hop_limit {0} exceeds the limit of {MAX_HOP_LIMIT}")]
    HopLimit(usize),
    #[error("generative mode needs a model provider")]
    NoProvider,
    #[error("answer names things outside the retrieved context: {}", mentions.join(", "))]
    UngroundedAnswer { mentions: Vec<String>, text: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(#[from] IndexError),
}
