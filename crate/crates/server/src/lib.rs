//! HTTP front end over a loaded workspace. Every route except `/health`
//! requires `Authorization: Bearer <token>` when a token is configured.

mod error;
mod routes;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use medkg::graph::GraphStore;
use medkg::pipeline::{PipelineError, Workspace};
use medkg::qa::QaEngine;
use medkg::review::ReviewService;

pub use error::ApiError;

#[derive(Clone)]
pub struct AppState {
    pub review: Arc<ReviewService>,
    pub qa: QaEngine,
    pub store: Arc<GraphStore>,
    /// Required bearer token; `None` leaves the API open.
    pub token: Option<Arc<str>>,
}

impl AppState {
    pub fn from_workspace(ws: &Workspace, token: Option<String>) -> Result<Self, PipelineError> {
        Ok(AppState {
            review: Arc::new(ws.review_service()?),
            qa: ws.qa_engine(),
            store: ws.store.clone(),
            token: token.filter(|t| !t.is_empty()).map(Arc::from),
        })
    }
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(expected) = &state.token {
        let given = req.headers().get(AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(&**expected) {
            return Err(ApiError::unauthorized());
        }
    }
    Ok(next.run(req).await)
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/review/next", get(routes::review_next))
        .route("/review/items", get(routes::review_items))
        .route("/review/items/{id}", get(routes::review_item))
        .route("/review/items/{id}/decision", post(routes::review_decision))
        .route("/review/stats", get(routes::review_stats))
        .route("/templates/{id}/feedback", post(routes::template_feedback))
        .route("/templates/{id}/versions", get(routes::template_versions))
        .route("/qa", post(routes::qa))
        .route("/graph/stats", get(routes::graph_stats))
        .route("/graph/nodes", get(routes::graph_nodes))
        .route("/graph/nodes/{id}", get(routes::graph_node))
        .route("/graph/edges", get(routes::graph_edges))
        .route("/graph/edges/{id}", get(routes::graph_edge))
        .route("/graph/conflicts", get(routes::graph_conflicts))
        .route("/graph/neighborhood", get(routes::graph_neighborhood))
        .route("/graph/paths", get(routes::graph_paths))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/health", get(|| async { "ok" })).merge(api).with_state(state)
}

/// Serves until Ctrl-C, then checkpoints the graph.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let store = state.store.clone();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    store.checkpoint().map_err(std::io::Error::other)
}
