use serde::{Deserialize, Serialize};

use super::ReviewError;
use crate::extraction::{ExtractionError, PromptTemplate, TemplateRegistry};
use crate::graph::short_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    /// Replace the whole body.
    PromptRevision,
    /// Append one extra instruction to the latest body.
    RuleAdjustment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackAction {
    /// Generated from the content when left empty.
    #[serde(default)]
    pub action_id: String,
    pub kind: FeedbackKind,
    pub target_template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_patch: Option<String>,
    #[serde(default)]
    pub justification: String,
    /// Filled in when the action is recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resulting_version: Option<u32>,
}

pub const RULE_PREFIX: &str = "Additional rule: ";

/// Turns reviewer feedback into the next template version. Earlier versions
/// stay in the registry untouched.
pub fn record_feedback(action: &mut FeedbackAction, templates: &mut TemplateRegistry) -> Result<PromptTemplate, ReviewError> {
    let id = action.target_template_id.clone();
    let latest = templates.latest(&id).ok_or_else(|| ReviewError::NotFound(format!("template {id}")))?;
    let body = match action.kind {
        FeedbackKind::PromptRevision => match &action.new_body {
            Some(b) if action.rule_patch.is_none() => b.clone(),
            _ => return Err(ReviewError::Invalid("prompt_revision takes new_body and no rule_patch".into())),
        },
        FeedbackKind::RuleAdjustment => match &action.rule_patch {
            Some(p) if action.new_body.is_none() && !p.trim().is_empty() => {
                format!("{}\n\n{RULE_PREFIX}{}\n", latest.body.trim_end(), p.trim())
            }
            _ => return Err(ReviewError::Invalid("rule_adjustment takes a non-empty rule_patch and no new_body".into())),
        },
    };
    if action.action_id.trim().is_empty() {
        action.action_id = format!("f-{}", short_hash(&[&id, &latest.version.to_string(), &body]));
    }
    let t = templates.revise(&id, &body, Some(&action.action_id)).map_err(|e| match e {
        ExtractionError::UnknownTemplate(t) => ReviewError::NotFound(format!("template {t}")),
        other => ReviewError::Invalid(other.to_string()),
    })?;
    action.resulting_version = Some(t.version);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BODY: &str = "Schema:\n{ontology_summary}\nText:\n{chunks}\nTask:\n{intent}\n";

    fn registry() -> TemplateRegistry {
        let mut r = TemplateRegistry::new();
        r.register(PromptTemplate::new("base", 1, BODY, None).unwrap()).unwrap();
        r
    }

    fn revision(body: &str) -> FeedbackAction {
        FeedbackAction {
            action_id: String::new(),
            kind: FeedbackKind::PromptRevision,
            target_template_id: "base".into(),
            new_body: Some(body.into()),
            rule_patch: None,
            justification: "missed indirect links".into(),
            resulting_version: None,
        }
    }

    #[test]
    fn revisions_are_monotonic_and_keep_old_versions() {
        let mut r = registry();
        let mut a = revision(&format!("Be exhaustive.\n{BODY}"));
        let t2 = record_feedback(&mut a, &mut r).unwrap();
        assert_eq!((t2.version, a.resulting_version), (2, Some(2)));
        assert_eq!(t2.created_from.as_deref(), Some(a.action_id.as_str()));
        let mut b = FeedbackAction { kind: FeedbackKind::RuleAdjustment, new_body: None, rule_patch: Some("List secondary causes as associated_with.".into()), ..revision("") };
        let t3 = record_feedback(&mut b, &mut r).unwrap();
        assert_eq!(t3.version, 3);
        assert!(t3.body.ends_with("Additional rule: List secondary causes as associated_with.\n"));
        assert_eq!(r.get("base", 1).unwrap().body, BODY);
        assert_eq!(r.versions("base").unwrap().len(), 3);
    }

    #[test]
    fn errors() {
        let mut r = registry();
        let mut unknown = FeedbackAction { target_template_id: "nope".into(), ..revision(BODY) };
        assert!(matches!(record_feedback(&mut unknown, &mut r), Err(ReviewError::NotFound(_))));
        let mut bad = revision("no placeholders");
        assert!(matches!(record_feedback(&mut bad, &mut r), Err(ReviewError::Invalid(_))));
        let mut doubled = FeedbackAction { kind: FeedbackKind::RuleAdjustment, new_body: None, rule_patch: Some("{chunks}".into()), ..revision("") };
        assert!(matches!(record_feedback(&mut doubled, &mut r), Err(ReviewError::Invalid(_))));
        assert_eq!(r.versions("base").unwrap().len(), 1);
    }
}
