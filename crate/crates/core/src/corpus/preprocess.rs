use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ControlledVocabulary, CorpusError, GuidelineDocument};
use crate::tsv;

const DEFAULT_RULES: &str = include_str!("../../data/boilerplate.tsv");

/// Upper bound on rewrite rounds per line; real vocabularies settle in two.
const MAX_ROUNDS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    Boilerplate,
    CitationMarker,
    PageArtifact,
}

impl RemovalReason {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "boilerplate" => Some(RemovalReason::Boilerplate),
            "citation-marker" => Some(RemovalReason::CitationMarker),
            "page-artifact" => Some(RemovalReason::PageArtifact),
            _ => None,
        }
    }
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::Boilerplate => "boilerplate",
            RemovalReason::CitationMarker => "citation-marker",
            RemovalReason::PageArtifact => "page-artifact",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedSpan {
    /// Byte range into the raw text.
    pub span: (usize, usize),
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    /// Byte range into the raw text; `surface` is the raw text there.
    pub span: (usize, usize),
    pub surface: String,
    pub canonical: String,
    pub vocabulary_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedDocument {
    pub doc_id: String,
    pub normalized_text: String,
    pub removed_spans: Vec<RemovedSpan>,
    pub substitutions: Vec<Substitution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Line,
    Inline,
}

#[derive(Debug, Clone)]
struct Rule {
    reason: RemovalReason,
    scope: Scope,
    pattern: Regex,
}

/// Content-filter patterns from a `reason<TAB>scope<TAB>regex` file.
///
/// A `line` rule drops every line it matches, newline included. An `inline`
/// rule drops each match.
#[derive(Debug, Clone, Default)]
pub struct BoilerplateRules {
    rules: Vec<Rule>,
}

impl BoilerplateRules {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut rules = Vec::new();
        for rec in tsv::records(text) {
            let err = |message: String| CorpusError::Boilerplate { line: rec.line, message };
            let [reason, scope, pattern] = rec.fields[..] else {
                return Err(err("expected `reason<TAB>scope<TAB>pattern`".into()));
            };
            let reason = RemovalReason::parse(reason).ok_or_else(|| err(format!("unknown reason {reason:?}")))?;
            let scope = match scope {
                "line" => Scope::Line,
                "inline" => Scope::Inline,
                other => return Err(err(format!("unknown scope {other:?}"))),
            };
            let pattern = Regex::new(pattern).map_err(|e| err(e.to_string()))?;
            rules.push(Rule { reason, scope, pattern });
        }
        Ok(BoilerplateRules { rules })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text =
            fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// The pattern set shipped in `data/boilerplate.tsv`.
    pub fn builtin() -> &'static BoilerplateRules {
        static RULES: OnceLock<BoilerplateRules> = OnceLock::new();
        RULES.get_or_init(|| BoilerplateRules::parse(DEFAULT_RULES).expect("shipped boilerplate patterns are valid"))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Preprocesses with the shipped pattern set.
pub fn preprocess(doc: &GuidelineDocument, vocabulary: &ControlledVocabulary) -> NormalizedDocument {
    Preprocessor::new(BoilerplateRules::builtin().clone(), vocabulary.clone()).run(doc)
}

#[derive(Debug, Clone)]
pub struct Preprocessor {
    rules: BoilerplateRules,
    vocabulary: ControlledVocabulary,
}

/// A line being rewritten. `origin[i]` is the raw byte range that produced
/// byte `i` of `text`.
struct WorkLine {
    text: String,
    origin: Vec<(usize, usize)>,
}

impl WorkLine {
    fn raw_span(&self, start: usize, end: usize) -> (usize, usize) {
        (self.origin[start].0, self.origin[end - 1].1)
    }
}

impl Preprocessor {
    pub fn new(rules: BoilerplateRules, vocabulary: ControlledVocabulary) -> Self {
        Preprocessor { rules, vocabulary }
    }

    pub fn vocabulary(&self) -> &ControlledVocabulary {
        &self.vocabulary
    }

    pub fn run(&self, doc: &GuidelineDocument) -> NormalizedDocument {
        self.normalize(&doc.doc_id, &doc.raw_text)
    }

    /// Each line is rewritten until it stops changing, so running the result
    /// through again is a no-op.
    pub fn normalize(&self, doc_id: &str, raw: &str) -> NormalizedDocument {
        let mut out = NormalizedDocument {
            doc_id: doc_id.to_string(),
            normalized_text: String::with_capacity(raw.len()),
            removed_spans: Vec::new(),
            substitutions: Vec::new(),
        };
        let mut offset = 0;
        for full in raw.split_inclusive('\n') {
            let content = full.strip_suffix('\n').unwrap_or(full);
            let content = content.strip_suffix('\r').unwrap_or(content);
            let terminator = &full[content.len()..];
            self.line(raw, offset, content, full.len(), terminator, &mut out);
            offset += full.len();
        }
        out
    }

    fn line(
        &self,
        raw: &str,
        start: usize,
        content: &str,
        full_len: usize,
        terminator: &str,
        out: &mut NormalizedDocument,
    ) {
        let mut line = WorkLine {
            text: content.to_string(),
            origin: (start..start + content.len()).map(|i| (i, i + 1)).collect(),
        };
        let mut removed = Vec::new();
        let mut substituted = Vec::new();
        for _ in 0..MAX_ROUNDS {
            if let Some(rule) =
                self.rules.rules.iter().find(|r| r.scope == Scope::Line && r.pattern.is_match(&line.text))
            {
                out.removed_spans.push(RemovedSpan { span: (start, start + full_len), reason: rule.reason });
                return;
            }
            let a = self.strip_inline(&mut line, &mut removed);
            let b = self.substitute(raw, &mut line, &mut substituted);
            if !a && !b {
                break;
            }
        }
        out.removed_spans.extend(removed);
        out.substitutions.extend(substituted);
        out.normalized_text.push_str(&line.text);
        out.normalized_text.push_str(terminator);
    }

    fn strip_inline(&self, line: &mut WorkLine, removed: &mut Vec<RemovedSpan>) -> bool {
        let mut changed = false;
        for rule in self.rules.rules.iter().filter(|r| r.scope == Scope::Inline) {
            let hits: Vec<(usize, usize)> =
                rule.pattern.find_iter(&line.text).filter(|m| !m.is_empty()).map(|m| (m.start(), m.end())).collect();
            if hits.is_empty() {
                continue;
            }
            changed = true;
            let mut text = String::with_capacity(line.text.len());
            let mut origin = Vec::with_capacity(line.origin.len());
            let mut at = 0;
            for (s, e) in hits {
                removed.push(RemovedSpan { span: line.raw_span(s, e), reason: rule.reason });
                text.push_str(&line.text[at..s]);
                origin.extend_from_slice(&line.origin[at..s]);
                at = e;
            }
            text.push_str(&line.text[at..]);
            origin.extend_from_slice(&line.origin[at..]);
            *line = WorkLine { text, origin };
        }
        changed
    }

    fn substitute(&self, raw: &str, line: &mut WorkLine, subs: &mut Vec<Substitution>) -> bool {
        if self.vocabulary.is_empty() {
            return false;
        }
        let mut text = String::with_capacity(line.text.len());
        let mut origin = Vec::with_capacity(line.origin.len());
        let mut changed = false;
        let mut prev: Option<char> = None;
        let mut i = 0;
        while i < line.text.len() {
            let rest = &line.text[i..];
            let word_start = !prev.is_some_and(char::is_alphanumeric);
            if word_start {
                if let Some((entry, len)) = self.vocabulary.match_at(rest) {
                    let found = &rest[..len];
                    if found == entry.canonical {
                        text.push_str(found);
                        origin.extend_from_slice(&line.origin[i..i + len]);
                    } else {
                        let span = line.raw_span(i, i + len);
                        subs.push(Substitution {
                            span,
                            surface: raw[span.0..span.1].to_string(),
                            canonical: entry.canonical.clone(),
                            vocabulary_id: entry.id.clone(),
                        });
                        text.push_str(&entry.canonical);
                        origin.extend(std::iter::repeat_n(span, entry.canonical.len()));
                        changed = true;
                    }
                    prev = found.chars().next_back();
                    i += len;
                    continue;
                }
            }
            let c = rest.chars().next().expect("in bounds");
            text.push(c);
            origin.extend_from_slice(&line.origin[i..i + c.len_utf8()]);
            prev = Some(c);
            i += c.len_utf8();
        }
        if changed {
            *line = WorkLine { text, origin };
        }
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> ControlledVocabulary {
        ControlledVocabulary::parse(
            "Thyroid Stimulating Hormone\tTSH\tthyrotropin\n\
             High-density lipoprotein (HDL)\tHDL\tHDL-C\n\
             Human chorionic gonadotropin\thCG\n",
        )
        .unwrap()
    }

    fn run(raw: &str, v: &ControlledVocabulary) -> NormalizedDocument {
        Preprocessor::new(BoilerplateRules::builtin().clone(), v.clone()).normalize("doc-x", raw)
    }

    #[test]
    fn tsh_is_substituted_once() {
        let v = ControlledVocabulary::parse("Thyroid Stimulating Hormone\tTSH\n").unwrap();
        let n = run("Serum TSH is the first-line test.\n", &v);
        assert!(n.normalized_text.contains("Thyroid Stimulating Hormone"));
        assert_eq!(n.substitutions.len(), 1);
        let s = &n.substitutions[0];
        assert_eq!((s.span, s.surface.as_str(), s.vocabulary_id.as_str()), ((6, 9), "TSH", "vocab:1"));
    }

    #[test]
    fn page_artifact_line_is_removed() {
        let raw = "Intro line.\nPage 12 of 40\nNext line.\n";
        let n = run(raw, &ControlledVocabulary::empty());
        assert_eq!(n.normalized_text, "Intro line.\nNext line.\n");
        assert_eq!(n.removed_spans, vec![RemovedSpan { span: (12, 26), reason: RemovalReason::PageArtifact }]);
        assert_eq!(&raw[12..26], "Page 12 of 40\n");
    }

    #[test]
    fn empty_vocabulary_only_drops_boilerplate() {
        let raw = "Copyright 2021 Someone.\nHDL [3] matters [4, 5].\n- 7 -\nEnd";
        let n = run(raw, &ControlledVocabulary::empty());
        assert_eq!(n.normalized_text, "HDL matters.\nEnd");
        assert!(n.substitutions.is_empty());
        let reasons: Vec<_> = n.removed_spans.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            vec![
                RemovalReason::Boilerplate,
                RemovalReason::CitationMarker,
                RemovalReason::CitationMarker,
                RemovalReason::PageArtifact
            ]
        );
        for r in &n.removed_spans {
            assert!(raw.is_char_boundary(r.span.0) && raw.is_char_boundary(r.span.1));
        }
        assert_eq!(&raw[n.removed_spans[1].span.0..n.removed_spans[1].span.1], " [3]");
    }

    #[test]
    fn longest_match_and_word_boundaries() {
        let n = run("HDL-C and HDL, not HDLX; tsh.", &vocab());
        assert_eq!(
            n.normalized_text,
            "High-density lipoprotein (HDL) and High-density lipoprotein (HDL), not HDLX; Thyroid Stimulating Hormone."
        );
        assert_eq!(n.substitutions.len(), 3);
        assert_eq!(n.substitutions[0].surface, "HDL-C");
    }

    #[test]
    fn canonical_form_is_left_alone() {
        let n = run("Thyroid Stimulating Hormone and thyroid stimulating hormone", &vocab());
        assert_eq!(n.normalized_text, "Thyroid Stimulating Hormone and Thyroid Stimulating Hormone");
        assert_eq!(n.substitutions.len(), 1);
        assert_eq!(n.substitutions[0].span, (32, 59));
    }

    #[test]
    fn nested_citation_markers_settle() {
        let n = run("see [[1]2] here", &ControlledVocabulary::empty());
        assert_eq!(n.normalized_text, "see here");
        assert_eq!(run(&n.normalized_text, &ControlledVocabulary::empty()).normalized_text, n.normalized_text);
    }

    #[test]
    fn crlf_lines() {
        let n = run("a\r\nPage 1 of 2\r\nb\r\n", &ControlledVocabulary::empty());
        assert_eq!(n.normalized_text, "a\r\nb\r\n");
    }

    fn word() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("TSH".to_string()),
            Just("tsh".to_string()),
            Just("HDL".to_string()),
            Just("HDL-C".to_string()),
            Just("hCG".to_string()),
            Just("thyrotropin".to_string()),
            Just("Thyroid".to_string()),
            Just("Hormone".to_string()),
            Just("[12]".to_string()),
            Just("[".to_string()),
            Just("]".to_string()),
            Just("\nPage 3 of 9\n".to_string()),
            Just("\n© x\n".to_string()),
            "[a-z]{1,6}",
            "[0-9]{1,3}",
            Just(",".to_string()),
            Just("\n".to_string()),
            Just("µ".to_string()),
        ]
    }

    fn text() -> impl Strategy<Value = String> {
        prop::collection::vec((word(), prop_oneof![Just(" "), Just(""), Just("\t")]), 0..40)
            .prop_map(|ws| ws.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
    }

    proptest! {
        #[test]
        fn idempotent(raw in text()) {
            let v = vocab();
            let once = run(&raw, &v);
            let twice = run(&once.normalized_text, &v);
            prop_assert_eq!(&twice.normalized_text, &once.normalized_text);
            prop_assert!(twice.substitutions.is_empty());
            prop_assert!(twice.removed_spans.is_empty());
        }

        #[test]
        fn spans_point_into_raw(raw in text()) {
            let n = run(&raw, &vocab());
            for r in &n.removed_spans {
                prop_assert!(r.span.0 < r.span.1 && r.span.1 <= raw.len());
                prop_assert!(raw.is_char_boundary(r.span.0) && raw.is_char_boundary(r.span.1));
            }
            for s in &n.substitutions {
                prop_assert_eq!(&raw[s.span.0..s.span.1], s.surface.as_str());
            }
        }

        #[test]
        fn deterministic(raw in text()) {
            prop_assert_eq!(run(&raw, &vocab()), run(&raw, &vocab()));
        }
    }
}
