use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::item::build_context;
use super::{
    compute_stats, record_feedback, Action, DecisionLog, FeedbackAction, ItemStatus, ItemTarget, ReviewDecision, ReviewError,
    ReviewItem, ReviewStats,
};
use crate::corpus::Chunk;
use crate::extraction::{align_candidates, CandidateTriple, PromptTemplate, TemplateRegistry, TripleStatus};
use crate::fusion::{fuse, normalize_item, winning_value, FusionItem, FusionReport, FusionResources};
use crate::graph::{short_hash, EdgeStatus, ExtractorId, GraphStore, KnowledgeGraph, Resolution};

/// Template id recorded in the provenance of triples that came from an edit.
pub const EDIT_TEMPLATE_ID: &str = "review-edit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub action: Action,
    #[serde(default)]
    pub edited_triple: Option<CandidateTriple>,
    #[serde(default)]
    pub winner: Option<usize>,
    pub reviewer_id: String,
    #[serde(default)]
    pub note: String,
    pub expected_version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    #[serde(flatten)]
    pub review: ReviewStats,
    pub pending_edges: usize,
    pub pending_conflicts: usize,
}

struct Queue {
    items: BTreeMap<String, ReviewItem>,
    order: Vec<String>,
    log: DecisionLog,
    stats: ReviewStats,
}

struct Templates {
    registry: TemplateRegistry,
    path: Option<PathBuf>,
}

/// The review queue over a shared graph store.
///
/// All decisions go through one lock, so two racing decisions on an item
/// serialize and the loser sees a version conflict. Readers only take the
/// lock long enough to clone.
pub struct ReviewService {
    store: Arc<GraphStore>,
    resources: Arc<FusionResources>,
    chunks: Arc<BTreeMap<String, Chunk>>,
    queue: Mutex<Queue>,
    templates: Mutex<Templates>,
}

fn status_for(action: Action) -> ItemStatus {
    match action {
        Action::Accept => ItemStatus::Accepted,
        Action::Reject => ItemStatus::Rejected,
        Action::Edit => ItemStatus::Edited,
    }
}

impl ReviewService {
    /// Rebuilds decided items from `log`, then queues every candidate edge
    /// and escalated conflict that has no item yet.
    pub fn new(
        store: Arc<GraphStore>,
        resources: Arc<FusionResources>,
        chunks: Arc<BTreeMap<String, Chunk>>,
        log: DecisionLog,
        templates: TemplateRegistry,
    ) -> Self {
        let graph = store.snapshot();
        let mut items = BTreeMap::new();
        let mut order = Vec::new();
        for d in log.decisions() {
            let item = ReviewItem {
                item_id: d.item_id.clone(),
                target: d.target.clone(),
                status: status_for(d.action),
                version: 2,
                decision_id: Some(d.decision_id.clone()),
                context: build_context(&d.target, &graph, &resources.schema, &chunks),
            };
            if items.insert(d.item_id.clone(), item).is_none() {
                order.push(d.item_id.clone());
            }
        }
        let stats = compute_stats(log.decisions());
        let service = ReviewService {
            store,
            resources,
            chunks,
            queue: Mutex::new(Queue { items, order, log, stats }),
            templates: Mutex::new(Templates { registry: templates, path: None }),
        };
        service.sync();
        service
    }

    /// Saves the registry to `path` after every feedback action and appends
    /// the action to `<path>.feedback.jsonl`.
    pub fn persist_templates(self, path: &Path) -> Self {
        self.templates.lock().expect("template lock poisoned").path = Some(path.to_path_buf());
        self
    }

    pub fn store(&self) -> &Arc<GraphStore> {
        &self.store
    }

    pub fn resources(&self) -> &Arc<FusionResources> {
        &self.resources
    }

    fn enqueue(&self, q: &mut Queue, graph: &KnowledgeGraph, target: ItemTarget) -> ReviewItem {
        let id = target.item_id();
        if let Some(existing) = q.items.get(&id) {
            return existing.clone();
        }
        let item = ReviewItem {
            item_id: id.clone(),
            context: build_context(&target, graph, &self.resources.schema, &self.chunks),
            target,
            status: ItemStatus::Pending,
            version: 1,
            decision_id: None,
        };
        q.items.insert(id.clone(), item.clone());
        q.order.push(id);
        item
    }

    /// Queues every candidate edge and escalated conflict lacking an item.
    /// Returns the new items.
    pub fn sync(&self) -> Vec<ReviewItem> {
        let graph = self.store.snapshot();
        let mut q = self.queue.lock().expect("queue lock poisoned");
        let mut targets: Vec<ItemTarget> = graph
            .edges()
            .filter(|e| e.status == EdgeStatus::Candidate)
            .map(|e| ItemTarget::Edge { edge_id: e.edge_id.clone() })
            .collect();
        targets.extend(graph.conflicts().filter(|c| c.is_escalated()).map(|c| ItemTarget::Conflict { conflict_id: c.conflict_id.clone() }));
        let mut out = Vec::new();
        for t in targets {
            if !q.items.contains_key(&t.item_id()) {
                out.push(self.enqueue(&mut q, &graph, t));
            }
        }
        out
    }

    /// One pending item per edge; edges already queued return their item.
    pub fn enqueue_batch(&self, edge_ids: &[String]) -> Result<Vec<ReviewItem>, ReviewError> {
        let graph = self.store.snapshot();
        let mut q = self.queue.lock().expect("queue lock poisoned");
        for id in edge_ids {
            let edge = graph.edge(id).ok_or_else(|| ReviewError::NotFound(format!("edge {id}")))?;
            let known = q.items.get(&ItemTarget::Edge { edge_id: id.clone() }.item_id()).is_some_and(|i| i.status == ItemStatus::Pending);
            if edge.status != EdgeStatus::Candidate && !known {
                return Err(ReviewError::State(format!("edge {id} is {}, not candidate", edge.status)));
            }
        }
        Ok(edge_ids.iter().map(|id| self.enqueue(&mut q, &graph, ItemTarget::Edge { edge_id: id.clone() })).collect())
    }

    pub fn enqueue_conflicts(&self, conflict_ids: &[String]) -> Result<Vec<ReviewItem>, ReviewError> {
        let graph = self.store.snapshot();
        let mut q = self.queue.lock().expect("queue lock poisoned");
        for id in conflict_ids {
            let c = graph.conflict(id).ok_or_else(|| ReviewError::NotFound(format!("conflict {id}")))?;
            if !c.is_escalated() {
                return Err(ReviewError::State(format!("conflict {id} is already resolved")));
            }
        }
        Ok(conflict_ids
            .iter()
            .map(|id| self.enqueue(&mut q, &graph, ItemTarget::Conflict { conflict_id: id.clone() }))
            .collect())
    }

    fn fresh(&self, item: &ReviewItem, graph: &KnowledgeGraph) -> ReviewItem {
        let mut item = item.clone();
        item.context = build_context(&item.target, graph, &self.resources.schema, &self.chunks);
        item
    }

    pub fn item(&self, item_id: &str) -> Result<ReviewItem, ReviewError> {
        let graph = self.store.snapshot();
        let q = self.queue.lock().expect("queue lock poisoned");
        let item = q.items.get(item_id).ok_or_else(|| ReviewError::NotFound(format!("item {item_id}")))?;
        Ok(self.fresh(item, &graph))
    }

    /// Items in queue order, optionally filtered by status.
    pub fn items(&self, status: Option<ItemStatus>) -> Vec<ReviewItem> {
        let graph = self.store.snapshot();
        let q = self.queue.lock().expect("queue lock poisoned");
        q.order
            .iter()
            .map(|id| &q.items[id])
            .filter(|i| status.is_none_or(|s| i.status == s))
            .map(|i| self.fresh(i, &graph))
            .collect()
    }

    /// Oldest pending item. Reviewers are not tracked: two reviewers may
    /// receive the same item, and the version check settles who wins.
    pub fn next(&self) -> Option<ReviewItem> {
        let graph = self.store.snapshot();
        let q = self.queue.lock().expect("queue lock poisoned");
        q.order.iter().map(|id| &q.items[id]).find(|i| i.status == ItemStatus::Pending).map(|i| self.fresh(i, &graph))
    }

    pub fn stats(&self) -> QueueStats {
        let q = self.queue.lock().expect("queue lock poisoned");
        let pending = |edge: bool| q.items.values().filter(|i| i.status == ItemStatus::Pending && i.target.is_edge() == edge).count();
        QueueStats { review: q.stats, pending_edges: pending(true), pending_conflicts: pending(false) }
    }

    pub fn decisions(&self) -> Vec<ReviewDecision> {
        self.queue.lock().expect("queue lock poisoned").log.decisions().to_vec()
    }

    pub fn submit_decision(&self, item_id: &str, req: DecisionRequest) -> Result<ReviewItem, ReviewError> {
        let mut q = self.queue.lock().expect("queue lock poisoned");
        let item = q.items.get(item_id).ok_or_else(|| ReviewError::NotFound(format!("item {item_id}")))?.clone();
        if item.version != req.expected_version {
            return Err(ReviewError::Conflict { item_id: item_id.to_string(), expected: req.expected_version, current: item.version });
        }
        if item.status != ItemStatus::Pending {
            return Err(ReviewError::State(format!("item {item_id} is already decided")));
        }
        let reviewer = req.reviewer_id.trim();
        if reviewer.is_empty() {
            return Err(ReviewError::Invalid("reviewer_id is required".into()));
        }
        if req.edited_triple.is_some() != (req.action == Action::Edit) {
            return Err(ReviewError::Invalid("edited_triple is required for edit and only for edit".into()));
        }
        let conflict_accept = !item.target.is_edge() && req.action == Action::Accept;
        if req.winner.is_some() != conflict_accept {
            return Err(ReviewError::Invalid("winner is required to accept a conflict and allowed nowhere else".into()));
        }
        let decision = ReviewDecision {
            decision_id: format!("d-{}", short_hash(&[item_id, &item.version.to_string()])),
            item_id: item_id.to_string(),
            target: item.target.clone(),
            action: req.action,
            edited_triple: req.edited_triple.clone(),
            winner: req.winner,
            reviewer_id: reviewer.to_string(),
            note: req.note.clone(),
            decided_at: Utc::now(),
        };
        let did = decision.decision_id.clone();
        let ctx = self.resources.context();
        let log = &mut q.log;
        let report: Option<FusionReport> = self.store.write(|g| {
            let report = match &item.target {
                ItemTarget::Edge { edge_id } => {
                    let edge = g.edge(edge_id).ok_or_else(|| ReviewError::NotFound(format!("edge {edge_id}")))?.clone();
                    if edge.status != EdgeStatus::Candidate {
                        return Err(ReviewError::State(format!("edge {edge_id} is {}, not candidate", edge.status)));
                    }
                    match req.action {
                        Action::Accept => {
                            g.set_edge_status(edge_id, EdgeStatus::Asserted, Some(&did))?;
                            None
                        }
                        Action::Reject => {
                            g.set_edge_status(edge_id, EdgeStatus::Retracted, Some(&did))?;
                            None
                        }
                        Action::Edit => {
                            let fitem = edit_item(&edge.provenance.iter().map(|p| p.chunk_id.clone()).collect::<Vec<_>>(), &req, reviewer, &ctx.schema)?;
                            let norm = normalize_item(0, &fitem, &ctx, &mut BTreeSet::new()).expect("aligned item normalizes");
                            if norm.object.as_ref().is_some_and(|o| {
                                norm.subject.entity_id == edge.subject && norm.relation == edge.relation && o.entity_id == edge.object
                            }) {
                                return Err(ReviewError::Invalid("edit leaves the triple unchanged".into()));
                            }
                            let report = fuse(g, &[fitem], &ctx)?;
                            g.set_edge_status(edge_id, EdgeStatus::Retracted, Some(&did))?;
                            Some(report)
                        }
                    }
                }
                ItemTarget::Conflict { conflict_id } => {
                    let c = g.conflict(conflict_id).ok_or_else(|| ReviewError::NotFound(format!("conflict {conflict_id}")))?.clone();
                    match req.action {
                        Action::Accept => {
                            let w = req.winner.expect("checked above");
                            let contender = c.contenders.get(w).ok_or_else(|| ReviewError::Invalid(format!("winner {w} out of range")))?;
                            if let Some(flaw) = &contender.flaw {
                                return Err(ReviewError::Invalid(format!("contender {w} cannot win: {flaw}")));
                            }
                            g.set_conflict_resolution(conflict_id, Resolution::Resolved { winner: w, rationale: format!("expert decision {did}") })?;
                            let def = ctx.schema.attribute(&c.attribute).ok_or_else(|| ReviewError::State(format!("unknown attribute {}", c.attribute)))?;
                            let resolved = g.conflict(conflict_id).expect("exists").clone();
                            let value = winning_value(&resolved, def)
                                .ok_or_else(|| ReviewError::Invalid(format!("contender {w} does not parse as {}", c.attribute)))?;
                            g.set_attribute(&c.subject, &c.attribute, value)?;
                        }
                        Action::Reject => {}
                        Action::Edit => return Err(ReviewError::Invalid("conflicts are settled by accept with a winner, or reject".into())),
                    }
                    None
                }
            };
            // Last, so a failed graph change leaves no log entry.
            log.append(decision)?;
            Ok::<_, ReviewError>(report)
        })?;
        if item.target.is_edge() {
            q.stats.record(req.action);
        }
        let graph = self.store.snapshot();
        let updated = {
            let it = q.items.get_mut(item_id).expect("present");
            it.status = status_for(req.action);
            it.version += 1;
            it.decision_id = Some(did);
            it.context = build_context(&it.target, &graph, &self.resources.schema, &self.chunks);
            it.clone()
        };
        if let Some(r) = report {
            for id in &r.candidate_edges {
                if graph.edge(id).is_some_and(|e| e.status == EdgeStatus::Candidate) {
                    self.enqueue(&mut q, &graph, ItemTarget::Edge { edge_id: id.clone() });
                }
            }
            for id in &r.escalated_conflicts {
                self.enqueue(&mut q, &graph, ItemTarget::Conflict { conflict_id: id.clone() });
            }
        }
        Ok(updated)
    }

    /// Records a feedback action and returns the new template version.
    pub fn submit_feedback(&self, mut action: FeedbackAction) -> Result<(PromptTemplate, FeedbackAction), ReviewError> {
        let mut t = self.templates.lock().expect("template lock poisoned");
        let mut next = t.registry.clone();
        let template = record_feedback(&mut action, &mut next)?;
        if let Some(path) = &t.path {
            next.save(path).map_err(|e| ReviewError::Io { path: path.display().to_string(), message: e.to_string() })?;
            let log = feedback_log_path(path);
            let mut line = serde_json::to_vec(&action).expect("action serializes");
            line.push(b'\n');
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log)
                .and_then(|mut f| f.write_all(&line).and_then(|_| f.sync_data()))
                .map_err(|e| ReviewError::Io { path: log.display().to_string(), message: e.to_string() })?;
        }
        t.registry = next;
        Ok((template, action))
    }

    pub fn template_versions(&self, template_id: &str) -> Result<Vec<PromptTemplate>, ReviewError> {
        let t = self.templates.lock().expect("template lock poisoned");
        t.registry.versions(template_id).map(<[_]>::to_vec).ok_or_else(|| ReviewError::NotFound(format!("template {template_id}")))
    }

    pub fn templates(&self) -> TemplateRegistry {
        self.templates.lock().expect("template lock poisoned").registry.clone()
    }
}

pub fn feedback_log_path(template_path: &Path) -> PathBuf {
    let mut p = template_path.as_os_str().to_owned();
    p.push(".feedback.jsonl");
    PathBuf::from(p)
}

fn edit_item(
    original_chunks: &[String],
    req: &DecisionRequest,
    reviewer: &str,
    schema: &crate::ontology::OntologySchema,
) -> Result<FusionItem, ReviewError> {
    let mut t = req.edited_triple.clone().expect("checked above");
    if t.provenance.is_empty() {
        t.provenance = original_chunks.to_vec();
    }
    t.status = TripleStatus::Candidate;
    for a in &mut t.attributes {
        a.parsed_value = None;
    }
    let a = align_candidates(schema, vec![t], None);
    if let Some(r) = a.rejected.first() {
        let why: Vec<String> = r.violations.iter().map(|v| v.to_string()).collect();
        return Err(ReviewError::Invalid(format!("edited triple fails the schema: {}", why.join("; "))));
    }
    let triple = a.aligned.into_iter().next().expect("one candidate in, one out");
    Ok(FusionItem {
        triple,
        extractor: ExtractorId { template_id: EDIT_TEMPLATE_ID.into(), version: 1, provider: format!("reviewer:{reviewer}") },
    })
}
