use std::collections::BTreeMap;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use medkg::graph::{Conflict, Edge, EdgePattern, EdgeStatus, GraphStats, Node, NodePattern, Subgraph};
use medkg::graph::MAX_HOPS;
use medkg::qa::{Answer, QaRequest};
use medkg::review::{DecisionRequest, FeedbackAction, FeedbackKind, ItemStatus, QueueStats, ReviewItem};
use medkg::extraction::PromptTemplate;
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState};

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

/// Oldest pending item, or 204 when the queue is empty. Items are not leased,
/// so a `reviewer` query parameter is accepted and ignored.
pub async fn review_next(State(s): State<AppState>) -> Response {
    match s.review.next() {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

#[derive(Debug, Deserialize)]
pub struct ItemsQuery {
    #[serde(default)]
    pub status: Option<String>,
}

pub async fn review_items(State(s): State<AppState>, Query(q): Query<ItemsQuery>) -> ApiResult<Vec<ReviewItem>> {
    let status = match q.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some(x) => Some(ItemStatus::parse(x).ok_or_else(|| ApiError::invalid(format!("unknown status {x:?}")))?),
    };
    Ok(Json(s.review.items(status)))
}

pub async fn review_item(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<ReviewItem> {
    Ok(Json(s.review.item(&id)?))
}

pub async fn review_decision(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> ApiResult<ReviewItem> {
    let item = blocking(move || s.review.submit_decision(&id, req).map_err(ApiError::from)).await?;
    Ok(Json(item))
}

pub async fn review_stats(State(s): State<AppState>) -> Json<QueueStats> {
    Json(s.review.stats())
}

#[derive(Debug, Deserialize)]
pub struct FeedbackRequest {
    pub kind: FeedbackKind,
    #[serde(default)]
    pub new_body: Option<String>,
    #[serde(default)]
    pub rule_patch: Option<String>,
    #[serde(default)]
    pub justification: String,
    #[serde(default)]
    pub action_id: String,
}

#[derive(Debug, Serialize)]
pub struct FeedbackResponse {
    pub template: PromptTemplate,
    pub action: FeedbackAction,
}

pub async fn template_feedback(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<FeedbackRequest>,
) -> Result<(StatusCode, Json<FeedbackResponse>), ApiError> {
    let action = FeedbackAction {
        action_id: req.action_id,
        kind: req.kind,
        target_template_id: id,
        new_body: req.new_body,
        rule_patch: req.rule_patch,
        justification: req.justification,
        resulting_version: None,
    };
    let (template, action) = blocking(move || s.review.submit_feedback(action).map_err(ApiError::from)).await?;
    Ok((StatusCode::CREATED, Json(FeedbackResponse { template, action })))
}

pub async fn template_versions(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<PromptTemplate>> {
    Ok(Json(s.review.template_versions(&id)?))
}

pub async fn qa(State(s): State<AppState>, Json(req): Json<QaRequest>) -> ApiResult<Answer> {
    let answer = blocking(move || s.qa.ask(&req).map_err(ApiError::from)).await?;
    Ok(Json(answer))
}

pub async fn graph_stats(State(s): State<AppState>) -> Json<GraphStats> {
    Json(s.store.snapshot().stats())
}

#[derive(Debug, Default, Deserialize)]
pub struct NodeQuery {
    #[serde(default, rename = "type")]
    pub entity_type: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub include_retracted: bool,
}

pub async fn graph_nodes(State(s): State<AppState>, Query(q): Query<NodeQuery>) -> Json<Vec<Node>> {
    let g = s.store.snapshot();
    let pattern = NodePattern { entity_type: q.entity_type, label: q.label, include_retracted: q.include_retracted };
    Json(g.find_nodes(&pattern).into_iter().cloned().collect())
}

pub async fn graph_node(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Node> {
    s.store.snapshot().node(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found(format!("node {id}")))
}

#[derive(Debug, Default, Deserialize)]
pub struct EdgeQuery {
    #[serde(default)]
    pub relation: Option<String>,
    #[serde(default)]
    pub status: Option<EdgeStatus>,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub object: Option<String>,
}

pub async fn graph_edges(State(s): State<AppState>, Query(q): Query<EdgeQuery>) -> Json<Vec<Edge>> {
    let g = s.store.snapshot();
    let pattern = EdgePattern { relation: q.relation, status: q.status, subject: q.subject, object: q.object };
    Json(g.find_edges(&pattern).into_iter().cloned().collect())
}

pub async fn graph_edge(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Edge> {
    s.store.snapshot().edge(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found(format!("edge {id}")))
}

#[derive(Debug, Default, Deserialize)]
pub struct ConflictQuery {
    /// Only conflicts still awaiting an expert.
    #[serde(default)]
    pub escalated: bool,
}

pub async fn graph_conflicts(State(s): State<AppState>, Query(q): Query<ConflictQuery>) -> Json<Vec<Conflict>> {
    let g = s.store.snapshot();
    Json(g.conflicts().filter(|c| !q.escalated || c.is_escalated()).cloned().collect())
}

#[derive(Debug, Deserialize)]
pub struct NeighborhoodQuery {
    pub seed: String,
    #[serde(default = "one")]
    pub hops: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize)]
pub struct Neighborhood {
    pub nodes: BTreeMap<String, Node>,
    pub edges: BTreeMap<String, Edge>,
}

/// Nodes and asserted edges around `seed`.
pub async fn graph_neighborhood(State(s): State<AppState>, Query(q): Query<NeighborhoodQuery>) -> ApiResult<Neighborhood> {
    if q.hops > MAX_HOPS {
        return Err(ApiError::invalid(format!("hops {} exceeds the limit of {MAX_HOPS}", q.hops)));
    }
    let g = s.store.snapshot();
    if g.node(&q.seed).is_none() {
        return Err(ApiError::not_found(format!("node {}", q.seed)));
    }
    let Subgraph { nodes, edges } = g.neighborhood([q.seed.as_str()], q.hops);
    Ok(Json(Neighborhood {
        nodes: nodes.into_iter().filter_map(|id| g.node(&id).cloned().map(|n| (id, n))).collect(),
        edges: edges.into_iter().filter_map(|id| g.edge(&id).cloned().map(|e| (id, e))).collect(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct PathsQuery {
    pub src: String,
    pub dst: String,
    #[serde(default = "two")]
    pub max_hops: usize,
}

fn two() -> usize {
    2
}

/// Simple paths over asserted edges, each as its edge ids.
pub async fn graph_paths(State(s): State<AppState>, Query(q): Query<PathsQuery>) -> ApiResult<Vec<Vec<String>>> {
    let g = s.store.snapshot();
    for end in [&q.src, &q.dst] {
        if g.node(end).is_none_or(|n| n.retracted) {
            return Err(ApiError::not_found(format!("node {end}")));
        }
    }
    Ok(Json(g.paths(&q.src, &q.dst, q.max_hops)?))
}
