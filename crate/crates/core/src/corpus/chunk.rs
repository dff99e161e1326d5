use serde::{Deserialize, Serialize};

use super::{CorpusError, NormalizedDocument};

/// Window sizes in whitespace-delimited tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    pub max_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy { max_tokens: 200, overlap_tokens: 40 }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_tokens == 0 || self.overlap_tokens >= self.max_tokens {
            return Err(CorpusError::Config(format!(
                "need max_tokens > overlap_tokens >= 0, got max_tokens={} overlap_tokens={}",
                self.max_tokens, self.overlap_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    /// `{doc_id}#{ordinal:04}`.
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    /// Byte range into the normalized text.
    pub span: (usize, usize),
    pub section_path: Vec<String>,
    pub approx_token_count: usize,
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:04}")
}

/// ATX heading of level 1 to 6; returns (level, title).
fn heading(line: &str) -> Option<(usize, &str)> {
    let level = line.bytes().take_while(|&b| b == b'#').count();
    if level == 0 || level > 6 {
        return None;
    }
    let rest = &line[level..];
    if !rest.is_empty() && !rest.starts_with([' ', '\t']) {
        return None;
    }
    Some((level, rest.trim().trim_end_matches('#').trim_end()))
}

struct Section {
    start: usize,
    end: usize,
    path: Vec<String>,
}

fn sections(text: &str) -> Vec<Section> {
    let mut out = vec![Section { start: 0, end: text.len(), path: Vec::new() }];
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some((level, title)) = heading(line.trim_end()) {
            while stack.last().is_some_and(|(l, _)| *l >= level) {
                stack.pop();
            }
            stack.push((level, title.to_string()));
            out.last_mut().expect("non-empty").end = offset;
            out.push(Section {
                start: offset,
                end: text.len(),
                path: stack.iter().map(|(_, t)| t.clone()).collect(),
            });
        }
        offset += line.len();
    }
    out.retain(|s| s.start < s.end);
    out
}

fn token_starts(text: &str, start: usize, end: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut in_token = false;
    for (i, c) in text[start..end].char_indices() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            in_token = true;
            starts.push(start + i);
        }
    }
    starts
}

/// Splits at Markdown headings, then windows each section.
///
/// Windows advance by `max_tokens - overlap_tokens`. A window's span runs
/// from its first token to the start of the token after it, so chunks tile
/// the text: whitespace between windows belongs to the earlier chunk, and the
/// first and last windows of a section extend to the section edges. Sections
/// without tokens are folded into a neighbour.
pub fn chunk_document(ndoc: &NormalizedDocument, policy: ChunkPolicy) -> Result<Vec<Chunk>, CorpusError> {
    policy.validate()?;
    let text = &ndoc.normalized_text;

    let mut merged: Vec<(Section, Vec<usize>)> = Vec::new();
    let mut pending_start: Option<usize> = None;
    for mut s in sections(text) {
        let tokens = token_starts(text, s.start, s.end);
        if tokens.is_empty() {
            match merged.last_mut() {
                Some((prev, _)) => prev.end = s.end,
                None => pending_start = Some(pending_start.unwrap_or(s.start)),
            }
            continue;
        }
        if let Some(p) = pending_start.take() {
            s.start = p;
        }
        merged.push((s, tokens));
    }

    let step = policy.max_tokens - policy.overlap_tokens;
    let mut chunks = Vec::new();
    for (section, tokens) in merged {
        let n = tokens.len();
        let mut s = 0;
        loop {
            let e = (s + policy.max_tokens).min(n);
            let start = if s == 0 { section.start } else { tokens[s] };
            let end = if e == n { section.end } else { tokens[e] };
            chunks.push(Chunk {
                chunk_id: chunk_id(&ndoc.doc_id, chunks.len()),
                doc_id: ndoc.doc_id.clone(),
                text: text[start..end].to_string(),
                span: (start, end),
                section_path: section.path.clone(),
                approx_token_count: e - s,
            });
            if e >= n {
                break;
            }
            s += step;
        }
    }
    Ok(chunks)
}

/// Rebuilds the source from ordered chunks by dropping each overlap.
pub fn reconstruct(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    let mut covered = 0usize;
    for c in chunks {
        let skip = covered.saturating_sub(c.span.0);
        out.push_str(&c.text[skip.min(c.text.len())..]);
        covered = covered.max(c.span.1);
    }
    out
}
