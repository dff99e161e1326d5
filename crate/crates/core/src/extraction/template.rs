use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExtractionError;

pub const PLACEHOLDERS: [&str; 3] = ["{ontology_summary}", "{chunks}", "{intent}"];

/// An immutable template version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub version: u32,
    pub body: String,
    /// Feedback action that produced this version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_from: Option<String>,
}

impl PromptTemplate {
    pub fn new(template_id: &str, version: u32, body: &str, created_from: Option<&str>) -> Result<Self, ExtractionError> {
        if template_id.trim().is_empty() {
            return Err(ExtractionError::Template("empty template id".into()));
        }
        if version == 0 {
            return Err(ExtractionError::Template("versions start at 1".into()));
        }
        check_body(body)?;
        Ok(PromptTemplate {
            template_id: template_id.to_string(),
            version,
            body: body.to_string(),
            created_from: created_from.map(str::to_string),
        })
    }
}

/// Each placeholder must occur exactly once.
pub fn check_body(body: &str) -> Result<(), ExtractionError> {
    for p in PLACEHOLDERS {
        let n = body.matches(p).count();
        if n != 1 {
            return Err(ExtractionError::Template(format!("placeholder {p} occurs {n} times, expected once")));
        }
    }
    Ok(())
}

/// All versions of all templates. Versions only grow; nothing is removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, Vec<PromptTemplate>>,
}

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a version, which must be exactly one past the latest (or 1).
    pub fn register(&mut self, template: PromptTemplate) -> Result<(), ExtractionError> {
        check_body(&template.body)?;
        let versions = self.templates.entry(template.template_id.clone()).or_default();
        let expected = versions.last().map_or(1, |t| t.version + 1);
        if template.version != expected {
            return Err(ExtractionError::Template(format!(
                "template {} version {} is out of sequence, expected {expected}",
                template.template_id, template.version
            )));
        }
        versions.push(template);
        Ok(())
    }

    pub fn latest(&self, template_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(template_id).and_then(|v| v.last())
    }

    pub fn get(&self, template_id: &str, version: u32) -> Option<&PromptTemplate> {
        self.templates.get(template_id)?.iter().find(|t| t.version == version)
    }

    pub fn versions(&self, template_id: &str) -> Option<&[PromptTemplate]> {
        self.templates.get(template_id).map(Vec::as_slice)
    }

    pub fn template_ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Registers `body` as the next version of an existing template.
    pub fn revise(&mut self, template_id: &str, body: &str, created_from: Option<&str>) -> Result<PromptTemplate, ExtractionError> {
        let prior = self.latest(template_id).ok_or_else(|| ExtractionError::UnknownTemplate(template_id.to_string()))?;
        let next = PromptTemplate::new(template_id, prior.version + 1, body, created_from)?;
        self.register(next.clone())?;
        Ok(next)
    }

    pub fn load(path: &Path) -> Result<Self, ExtractionError> {
        let text = fs::read_to_string(path).map_err(|e| ExtractionError::io(path, e))?;
        let raw: BTreeMap<String, Vec<PromptTemplate>> =
            serde_json::from_str(&text).map_err(|e| ExtractionError::Template(format!("{}: {e}", path.display())))?;
        let mut reg = TemplateRegistry::new();
        for t in raw.into_values().flatten() {
            reg.register(t)?;
        }
        Ok(reg)
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<(), ExtractionError> {
        let tmp = path.with_extension("json.tmp");
        let json = serde_json::to_string_pretty(self).expect("registry serializes");
        fs::write(&tmp, json + "\n").map_err(|e| ExtractionError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| ExtractionError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BODY: &str = "Schema:\n{ontology_summary}\nTask: {intent}\nText:\n{chunks}\n";

    #[test]
    fn placeholders_exactly_once() {
        assert!(PromptTemplate::new("t", 1, BODY, None).is_ok());
        assert!(PromptTemplate::new("t", 1, "{chunks} {intent}", None).is_err());
        let twice = format!("{BODY}{{chunks}}");
        assert!(PromptTemplate::new("t", 1, &twice, None).is_err());
        assert!(PromptTemplate::new("t", 0, BODY, None).is_err());
    }

    #[test]
    fn revisions_are_monotonic_and_retained() {
        let mut reg = TemplateRegistry::new();
        reg.register(PromptTemplate::new("t", 1, BODY, None).unwrap()).unwrap();
        let v2 = reg.revise("t", &format!("Be precise.\n{BODY}"), Some("fb-1")).unwrap();
        assert_eq!(v2.version, 2);
        assert_eq!(reg.revise("t", BODY, Some("fb-2")).unwrap().version, 3);
        assert_eq!(reg.get("t", 1).unwrap().body, BODY);
        assert_eq!(reg.versions("t").unwrap().len(), 3);
        assert!(matches!(reg.revise("nope", BODY, None), Err(ExtractionError::UnknownTemplate(_))));
        assert!(reg.register(PromptTemplate::new("t", 3, BODY, None).unwrap()).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.json");
        let mut reg = TemplateRegistry::new();
        reg.register(PromptTemplate::new("t", 1, BODY, None).unwrap()).unwrap();
        reg.revise("t", &format!("{BODY}!"), Some("fb")).unwrap();
        reg.save(&path).unwrap();
        assert_eq!(TemplateRegistry::load(&path).unwrap(), reg);
    }
}
