//! Stage orchestration over a work directory: ingest, index, extract, fuse,
//! then validate, export, stats and question answering on the result.

mod config;
mod manifest;
mod stages;
mod workspace;

pub use config::{EmbeddingConfig, ModelConfig, PipelineConfig, DEFAULT_BIND, DEFAULT_TOKEN_ENV};
pub use manifest::{RunManifest, StageRecord};
pub use stages::{read_jsonl, write_jsonl, ExtractSummary, IndexSummary, IngestSummary, Pipeline, StatsReport};
pub use workspace::{load_resources, Workspace};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or arguments; exit code 2.
    #[error("config: {0}")]
    Config(String),
    #[error("{path} is missing; run `{stage}` first")]
    Missing { path: String, stage: &'static str },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub(crate) fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> Self {
        move |e| PipelineError::Stage { stage, message: e.to_string() }
    }
}
