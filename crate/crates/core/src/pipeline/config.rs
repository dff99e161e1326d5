use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::ChunkPolicy;
#[cfg(feature = "http-provider")]
use crate::extraction::HttpProviderConfig;
use crate::extraction::DEFAULT_PROMPT_BUDGET;
use crate::retrieval::{DEFAULT_DIMENSION, DEFAULT_TOP_K};

pub const DEFAULT_BIND: &str = "127.0.0.1:8088";
pub const DEFAULT_TOKEN_ENV: &str = "MEDKG_API_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Hashing { dimension: DEFAULT_DIMENSION }
    }
}

impl EmbeddingConfig {
    pub fn dimension(&self) -> usize {
        match self {
            EmbeddingConfig::Hashing { dimension } => *dimension,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Canned completions named by prompt digest.
    Mock { dir: PathBuf },
    #[cfg(feature = "http-provider")]
    Http(HttpProviderConfig),
}

/// Pipeline settings. Relative paths resolve against the directory holding
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub vocabulary: PathBuf,
    pub aliases: PathBuf,
    pub priority: PathBuf,
    pub codes: PathBuf,
    /// Built-in tables when absent.
    #[serde(default)]
    pub units: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub boilerplate: Option<PathBuf>,
    #[serde(default)]
    pub chunk_policy: ChunkPolicy,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    pub model: ModelConfig,
    pub intents: PathBuf,
    /// Seed registry, copied into the work directory on first use. Later
    /// revisions live only in the copy.
    pub templates: PathBuf,
    pub template_id: String,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default = "default_budget")]
    pub prompt_budget: usize,
    pub work_dir: PathBuf,
    /// Defaults to `<work_dir>/graph.jsonl`.
    #[serde(default)]
    pub graph_file: Option<PathBuf>,
    /// Defaults to `<work_dir>/decisions.jsonl`.
    #[serde(default)]
    pub decision_log: Option<PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Variable holding the API bearer token. Unset disables auth.
    #[serde(default = "default_token_env")]
    pub api_token_env: String,
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

fn default_budget() -> usize {
    DEFAULT_PROMPT_BUDGET
}

fn default_bind() -> String {
    DEFAULT_BIND.into()
}

fn default_token_env() -> String {
    DEFAULT_TOKEN_ENV.into()
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut c: PipelineConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.resolve(base);
        Ok(c)
    }

    /// Parses and resolves paths; call [`PipelineConfig::validate`] after
    /// applying overrides.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.corpus_dir,
            &mut self.vocabulary,
            &mut self.aliases,
            &mut self.priority,
            &mut self.codes,
            &mut self.intents,
            &mut self.templates,
            &mut self.work_dir,
        ] {
            absolutize(base, p);
        }
        for p in [&mut self.units, &mut self.schema, &mut self.boilerplate, &mut self.graph_file, &mut self.decision_log]
            .into_iter()
            .flatten()
        {
            absolutize(base, p);
        }
        match &mut self.model {
            ModelConfig::Mock { dir } => absolutize(base, dir),
            #[cfg(feature = "http-provider")]
            ModelConfig::Http(h) => absolutize(base, &mut h.audit_log),
        }
    }

    /// Input files exist and numeric settings are in range.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !self.corpus_dir.is_dir() {
            return bad(format!("corpus_dir {} is not a directory", self.corpus_dir.display()));
        }
        let mut files = vec![
            ("vocabulary", &self.vocabulary),
            ("aliases", &self.aliases),
            ("priority", &self.priority),
            ("codes", &self.codes),
            ("intents", &self.intents),
            ("templates", &self.templates),
        ];
        for (name, p) in [("units", &self.units), ("schema", &self.schema), ("boilerplate", &self.boilerplate)] {
            if let Some(p) = p {
                files.push((name, p));
            }
        }
        for (name, p) in files {
            if !p.is_file() {
                return bad(format!("{name} file {} does not exist", p.display()));
            }
        }
        // Irrefutable without the http-provider feature.
        #[allow(irrefutable_let_patterns)]
        if let ModelConfig::Mock { dir } = &self.model {
            if !dir.is_dir() {
                return bad(format!("mock directory {} does not exist", dir.display()));
            }
        }
        self.chunk_policy.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.embedding.dimension() == 0 {
            return bad("embedding dimension must be positive".into());
        }
        if self.retrieval_k == 0 {
            return bad("retrieval_k must be at least 1".into());
        }
        if self.prompt_budget == 0 {
            return bad("prompt_budget must be at least 1".into());
        }
        if self.template_id.trim().is_empty() {
            return bad("template_id must not be empty".into());
        }
        if self.bind.parse::<std::net::SocketAddr>().is_err() {
            return bad(format!("bind {:?} is not a socket address", self.bind));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, in hex.
    pub fn digest(&self) -> String {
        crate::extraction::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn graph_path(&self) -> PathBuf {
        self.graph_file.clone().unwrap_or_else(|| self.work_dir.join("graph.jsonl"))
    }

    pub fn decision_log_path(&self) -> PathBuf {
        self.decision_log.clone().unwrap_or_else(|| self.work_dir.join("decisions.jsonl"))
    }

    pub fn documents_path(&self) -> PathBuf {
        self.work_dir.join("documents.jsonl")
    }

    pub fn chunks_path(&self) -> PathBuf {
        self.work_dir.join("chunks.jsonl")
    }

    pub fn index_path(&self) -> PathBuf {
        self.work_dir.join("index.bin")
    }

    pub fn batches_dir(&self) -> PathBuf {
        self.work_dir.join("batches")
    }

    pub fn manifests_dir(&self) -> PathBuf {
        self.work_dir.join("manifests")
    }

    pub fn fusion_report_path(&self) -> PathBuf {
        self.work_dir.join("fusion_report.json")
    }

    /// The live template registry.
    pub fn work_templates_path(&self) -> PathBuf {
        self.work_dir.join("templates.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{
        "corpus_dir": "corpus", "vocabulary": "v.tsv", "aliases": "a.tsv", "priority": "p.tsv",
        "codes": "c.tsv", "model": {"provider": "mock", "dir": "mock"}, "intents": "i.json",
        "templates": "t.json", "template_id": "extract", "work_dir": "work"
    }"#;

    #[test]
    fn defaults_and_resolution() {
        let c = PipelineConfig::from_json(MIN, Path::new("/cfg")).unwrap();
        assert_eq!(c.corpus_dir, Path::new("/cfg/corpus"));
        assert_eq!(c.model, ModelConfig::Mock { dir: "/cfg/mock".into() });
        assert_eq!(c.graph_path(), Path::new("/cfg/work/graph.jsonl"));
        assert_eq!(c.retrieval_k, DEFAULT_TOP_K);
        assert_eq!(c.embedding.dimension(), DEFAULT_DIMENSION);
        assert_eq!(c.chunk_policy, ChunkPolicy::default());
        assert_eq!(c.bind, DEFAULT_BIND);
    }

    #[test]
    fn absolute_paths_are_kept() {
        let text = MIN.replace("\"work\"", "\"/elsewhere/work\"");
        let c = PipelineConfig::from_json(&text, Path::new("/cfg")).unwrap();
        assert_eq!(c.work_dir, Path::new("/elsewhere/work"));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let text = MIN.replace("\"work_dir\"", "\"workdir\"");
        let e = PipelineConfig::from_json(&text, Path::new("/")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let c = PipelineConfig::from_json(MIN, dir.path()).unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("corpus_dir"), "{e}");

        fs::create_dir(dir.path().join("corpus")).unwrap();
        fs::create_dir(dir.path().join("mock")).unwrap();
        for f in ["v.tsv", "a.tsv", "p.tsv", "c.tsv", "i.json", "t.json"] {
            fs::write(dir.path().join(f), "").unwrap();
        }
        c.validate().unwrap();

        let mut k = c.clone();
        k.retrieval_k = 0;
        assert!(k.validate().unwrap_err().to_string().contains("retrieval_k"));
        let mut p = c.clone();
        p.chunk_policy = ChunkPolicy { max_tokens: 10, overlap_tokens: 10 };
        assert!(p.validate().is_err());
        let mut b = c;
        b.bind = "nowhere".into();
        assert!(b.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = PipelineConfig::from_json(MIN, Path::new("/cfg")).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.retrieval_k += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
