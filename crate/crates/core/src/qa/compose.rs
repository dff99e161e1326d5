use std::collections::{BTreeMap, BTreeSet, VecDeque};

use regex::Regex;

use super::{find_seeds, Answer, Claim, ContextBundle, QaError, QaMode, Question};
use crate::extraction::ModelProvider;
use crate::graph::{Edge, KnowledgeGraph};

const DIRECT: &str = "indicates_risk_of";
const INDIRECT: &str = "associated_with";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionKind {
    ReferenceRange,
    /// Other indicators linked to the same diseases as the seed.
    SharedDiseases,
    Diseases,
    General,
}

/// Keyword routing; deliberately simple so a wrong route is easy to see.
pub fn classify(text: &str) -> QuestionKind {
    let t = text.to_lowercase();
    if t.contains("range") {
        QuestionKind::ReferenceRange
    } else if t.contains("indicator") && (t.contains("also") || t.contains("share") || t.contains("same disease")) {
        QuestionKind::SharedDiseases
    } else if t.contains("disease") || t.contains("associated") || t.contains("risk") {
        QuestionKind::Diseases
    } else {
        QuestionKind::General
    }
}

pub fn relation_phrase(relation: &str) -> String {
    match relation {
        DIRECT => "points directly to".into(),
        INDIRECT => "is indirectly associated with".into(),
        "treated_with" => "is treated with".into(),
        "treats" => "treats".into(),
        "diagnosed_by" => "is diagnosed by".into(),
        "measures" => "measures".into(),
        "assessed_by" => "is assessed by".into(),
        "followed_up_by" => "is followed up by".into(),
        other => format!("is linked by {other} to"),
    }
}

fn cite(ids: &[String]) -> String {
    format!("[{}]", ids.join(", "))
}

fn claim(text: String, edge_ids: Vec<String>, chunk_ids: Vec<String>) -> Claim {
    Claim { text, edge_ids, chunk_ids }
}

fn edges_from<'a>(b: &'a ContextBundle, subject: &str, relation: &str) -> Vec<&'a Edge> {
    let mut v: Vec<&Edge> = b.edges.values().filter(|e| e.subject == subject && e.relation == relation).collect();
    v.sort_by(|x, y| (b.label(&x.object), &x.edge_id).cmp(&(b.label(&y.object), &y.edge_id)));
    v
}

fn edges_to<'a>(b: &'a ContextBundle, object: &str, relation: &str) -> Vec<&'a Edge> {
    let mut v: Vec<&Edge> = b.edges.values().filter(|e| e.object == object && e.relation == relation).collect();
    v.sort_by(|x, y| (b.label(&x.subject), &x.edge_id).cmp(&(b.label(&y.subject), &y.edge_id)));
    v
}

fn disease_claims(b: &ContextBundle, seed: &str, claims: &mut Vec<Claim>, found: &mut Vec<String>) {
    let name = b.label(seed);
    let mut any = false;
    for (relation, how) in [(DIRECT, "directly"), (INDIRECT, "indirectly")] {
        let out = edges_from(b, seed, relation);
        if !out.is_empty() {
            let labels: Vec<&str> = out.iter().map(|e| b.label(&e.object)).collect();
            let ids: Vec<String> = out.iter().map(|e| e.edge_id.clone()).collect();
            claims.push(claim(format!("{name} is {how} associated with {} {}.", labels.join(", "), cite(&ids)), ids, Vec::new()));
            found.extend(out.iter().map(|e| e.object.clone()));
            any = true;
        }
        let inc = edges_to(b, seed, relation);
        if !inc.is_empty() {
            let labels: Vec<&str> = inc.iter().map(|e| b.label(&e.subject)).collect();
            let ids: Vec<String> = inc.iter().map(|e| e.edge_id.clone()).collect();
            claims.push(claim(format!("{name} is {how} associated with the indicators {} {}.", labels.join(", "), cite(&ids)), ids, Vec::new()));
            found.extend(inc.iter().map(|e| e.subject.clone()));
            any = true;
        }
    }
    if !any {
        claims.push(claim(format!("No reviewed disease association is recorded for {name}."), Vec::new(), Vec::new()));
    }
}

fn range_claims(b: &ContextBundle, seed: &str, claims: &mut Vec<Claim>, found: &mut Vec<String>) {
    let name = b.label(seed);
    match b.nodes.get(seed).and_then(|n| n.attributes.get("reference_range")) {
        Some(v) => {
            let mut chunks: Vec<String> = v.provenance.iter().map(|p| p.chunk_id.clone()).collect();
            chunks.dedup();
            let value = match &v.unit {
                Some(u) => format!("{} {u}", v.value),
                None => v.value.clone(),
            };
            claims.push(claim(format!("The reference range for {name} is {value} {}.", cite(&chunks)), Vec::new(), chunks));
            found.push(seed.to_string());
        }
        None => claims.push(claim(format!("No reference range is recorded for {name}."), Vec::new(), Vec::new())),
    }
}

fn shared_claims(b: &ContextBundle, seed: &str, claims: &mut Vec<Claim>, found: &mut Vec<String>) {
    let name = b.label(seed);
    // other indicator -> [(disease, seed edge, other edge)]
    let mut shared: BTreeMap<&str, Vec<(&str, &str, &str)>> = BTreeMap::new();
    for rel in [DIRECT, INDIRECT] {
        for mine in edges_from(b, seed, rel) {
            for rel2 in [DIRECT, INDIRECT] {
                for theirs in edges_to(b, &mine.object, rel2).into_iter().filter(|e| e.subject != seed) {
                    shared.entry(&theirs.subject).or_default().push((&mine.object, &mine.edge_id, &theirs.edge_id));
                }
            }
        }
    }
    if shared.is_empty() {
        claims.push(claim(format!("No other indicator shares a disease with {name} within the hop limit."), Vec::new(), Vec::new()));
        return;
    }
    let mut ordered: Vec<(&str, Vec<(&str, &str, &str)>)> = shared.into_iter().collect();
    ordered.sort_by(|x, y| (b.label(x.0), x.0).cmp(&(b.label(y.0), y.0)));
    for (other, mut via) in ordered {
        via.sort_by(|x, y| (b.label(x.0), x.1, x.2).cmp(&(b.label(y.0), y.1, y.2)));
        let diseases: BTreeSet<&str> = via.iter().map(|v| b.label(v.0)).collect();
        let mut ids: Vec<String> = via.iter().flat_map(|v| [v.1.to_string(), v.2.to_string()]).collect();
        ids.sort();
        ids.dedup();
        let list: Vec<&str> = diseases.into_iter().collect();
        claims.push(claim(
            format!("{} is associated with {}, as is {name} {}.", b.label(other), list.join(", "), cite(&ids)),
            ids,
            Vec::new(),
        ));
        found.push(other.to_string());
    }
}

fn general_claims(b: &ContextBundle, seed: &str, claims: &mut Vec<Claim>) {
    let mut touching: Vec<&Edge> = b.edges.values().filter(|e| e.subject == seed || e.object == seed).collect();
    touching.sort_by(|x, y| (&x.relation, b.label(&x.subject), b.label(&x.object)).cmp(&(&y.relation, b.label(&y.subject), b.label(&y.object))));
    for e in touching {
        let ids = vec![e.edge_id.clone()];
        claims.push(claim(
            format!("{} {} {} {}.", b.label(&e.subject), relation_phrase(&e.relation), b.label(&e.object), cite(&ids)),
            ids,
            Vec::new(),
        ));
    }
    if let Some(n) = b.nodes.get(seed) {
        for (attr, v) in &n.attributes {
            let chunks: Vec<String> = v.provenance.iter().map(|p| p.chunk_id.clone()).collect();
            let value = v.unit.as_ref().map_or_else(|| v.value.clone(), |u| format!("{} {u}", v.value));
            claims.push(claim(format!("{} has {} {value} {}.", n.label, attr.replace('_', " "), cite(&chunks)), Vec::new(), chunks));
        }
    }
}

/// Distance of each bundle node from the nearest seed.
fn distances(b: &ContextBundle) -> BTreeMap<&str, usize> {
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in &b.seed_entities {
        dist.insert(s, 0);
        queue.push_back(s.as_str());
    }
    while let Some(at) = queue.pop_front() {
        let d = dist[at];
        for e in b.edges.values() {
            let next = if e.subject == at { &e.object } else if e.object == at { &e.subject } else { continue };
            if !dist.contains_key(next.as_str()) {
                dist.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    dist
}

fn finish(b: &ContextBundle, claims: Vec<Claim>, answer_entities: Vec<String>) -> Answer {
    let dist = distances(b);
    let mut edges: Vec<String> = claims.iter().flat_map(|c| c.edge_ids.iter().cloned()).collect();
    edges.sort();
    edges.dedup();
    let mut chunks: Vec<String> = claims.iter().flat_map(|c| c.chunk_ids.iter().cloned()).collect();
    chunks.sort();
    chunks.dedup();
    let hops_used = edges
        .iter()
        .filter_map(|id| b.edges.get(id))
        .filter_map(|e| {
            let near = [dist.get(e.subject.as_str()), dist.get(e.object.as_str())].into_iter().flatten().min()?;
            Some(near + 1)
        })
        .max()
        .unwrap_or(0);
    let mut seen = BTreeSet::new();
    let answer_entities = answer_entities.into_iter().filter(|e| seen.insert(e.clone())).collect();
    Answer {
        text: claims.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" "),
        claims,
        answer_entities,
        cited_edge_ids: edges,
        cited_chunk_ids: chunks,
        hops_used,
    }
}

/// Deterministic template answer; a pure function of the bundle.
pub fn answer_grounded(b: &ContextBundle) -> Answer {
    let mut claims = Vec::new();
    let mut found = Vec::new();
    if b.seed_entities.is_empty() {
        let ids: Vec<String> = b.chunks.iter().map(|c| c.chunk_id.clone()).collect();
        claims.push(claim(format!("No graph entity matched the question; the closest passages are {}.", cite(&ids)), Vec::new(), ids));
        return finish(b, claims, found);
    }
    let kind = classify(&b.question);
    for seed in &b.seed_entities {
        match kind {
            QuestionKind::Diseases => disease_claims(b, seed, &mut claims, &mut found),
            QuestionKind::ReferenceRange => range_claims(b, seed, &mut claims, &mut found),
            QuestionKind::SharedDiseases => shared_claims(b, seed, &mut claims, &mut found),
            QuestionKind::General => general_claims(b, seed, &mut claims),
        }
    }
    if claims.is_empty() {
        let names: Vec<&str> = b.seed_entities.iter().map(|s| b.label(s)).collect();
        claims.push(claim(format!("Nothing reviewed is recorded about {}.", names.join(", ")), Vec::new(), Vec::new()));
    }
    finish(b, claims, found)
}

/// The prompt sent in generative mode: numbered facts, passages, question.
pub fn generative_prompt(b: &ContextBundle) -> String {
    let mut facts = Vec::new();
    for e in b.edges.values() {
        facts.push(format!("[{}] {} -[{}]-> {}", e.edge_id, b.label(&e.subject), e.relation, b.label(&e.object)));
    }
    for n in b.nodes.values() {
        for (attr, v) in &n.attributes {
            facts.push(format!("[{}] {} has {attr} {}", n.entity_id, n.label, v.value));
        }
    }
    let passages: Vec<String> = b.chunks.iter().filter_map(|c| c.text.as_ref().map(|t| format!("[{}] {t}", c.chunk_id))).collect();
    format!(
        "Answer using only the facts and passages below. Cite fact and passage ids in square brackets. \
         Describe links as associations, not causes.\n\nFacts:\n{}\n\nPassages:\n{}\n\nQuestion: {}\n",
        facts.join("\n"),
        passages.join("\n"),
        b.question
    )
}

/// Sends the bundle to `provider` and rejects answers that cite unknown ids
/// or name graph entities outside the bundle.
pub fn answer_generative(b: &ContextBundle, provider: &dyn ModelProvider, graph: &KnowledgeGraph) -> Result<Answer, QaError> {
    let text = provider.complete(&generative_prompt(b))?.trim().to_string();
    let id_re = Regex::new(r"\[([^\[\]]+)\]").expect("static regex");
    let mut offending = Vec::new();
    let mut edge_ids = Vec::new();
    let mut chunk_ids = Vec::new();
    for cap in id_re.captures_iter(&text) {
        for id in cap[1].split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if b.edges.contains_key(id) {
                edge_ids.push(id.to_string());
            } else if b.chunks.iter().any(|c| c.chunk_id == id) {
                chunk_ids.push(id.to_string());
            } else if !b.nodes.contains_key(id) {
                offending.push(id.to_string());
            }
        }
    }
    for id in find_seeds(&text, graph) {
        if !b.nodes.contains_key(&id) {
            offending.push(graph.node(&id).map_or(id.clone(), |n| n.label.clone()));
        }
    }
    if !offending.is_empty() {
        offending.sort();
        offending.dedup();
        return Err(QaError::UngroundedAnswer { mentions: offending, text });
    }
    let claims = vec![claim(text, edge_ids, chunk_ids)];
    Ok(finish(b, claims, Vec::new()))
}

pub fn answer(
    question: &Question,
    bundle: &ContextBundle,
    provider: Option<&dyn ModelProvider>,
    graph: &KnowledgeGraph,
) -> Result<Answer, QaError> {
    match question.mode {
        QaMode::Grounded => Ok(answer_grounded(bundle)),
        QaMode::Generative => answer_generative(bundle, provider.ok_or(QaError::NoProvider)?, graph),
    }
}
