//! Expert review: a queue of candidate edges and escalated conflicts, an
//! append-only decision log, precision stats, and template feedback.

mod feedback;
mod item;
mod log;
mod service;
mod stats;

pub use feedback::{record_feedback, FeedbackAction, FeedbackKind, RULE_PREFIX};
pub use item::{build_context, edge_triple, highlight, Excerpt, ItemContext, ItemStatus, ItemTarget, ReviewItem, CHECKLIST};
pub use log::{Action, DecisionLog, ReviewDecision};
pub use service::{DecisionRequest, QueueStats, ReviewService, EDIT_TEMPLATE_ID};
pub use stats::{compute_stats, ReviewStats};

use thiserror::Error;

use crate::graph::GraphError;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("item {item_id} is at version {current}, not {expected}")]
    Conflict { item_id: String, expected: u64, current: u64 },
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
