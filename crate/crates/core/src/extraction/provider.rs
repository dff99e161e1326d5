use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use crate::retrieval::ProviderError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key for canned completions and audit records.
pub fn prompt_digest(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub provider: String,
    pub model: String,
    /// First 16 hex digits of the sha256 of the parameter JSON.
    pub params_digest: String,
}

impl ProviderIdentity {
    pub fn new(provider: &str, model: &str, params: &serde_json::Value) -> Self {
        let digest = sha256_hex(params.to_string().as_bytes());
        ProviderIdentity { provider: provider.into(), model: model.into(), params_digest: digest[..16].to_string() }
    }
}

impl fmt::Display for ProviderIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}@{}", self.provider, self.model, self.params_digest)
    }
}

/// A completion backend. Implementations must tolerate concurrent calls.
pub trait ModelProvider: Send + Sync {
    fn identity(&self) -> ProviderIdentity;
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

/// Replays canned completions keyed by prompt digest: either files named
/// `<sha256 hex>.txt` in a directory, or an in-memory map.
#[derive(Debug, Clone)]
pub struct MockProvider {
    source: MockSource,
    model: String,
}

#[derive(Debug, Clone)]
enum MockSource {
    Dir(PathBuf),
    Map(BTreeMap<String, String>),
}

impl MockProvider {
    pub fn from_dir(dir: &Path) -> Self {
        MockProvider { source: MockSource::Dir(dir.to_path_buf()), model: "canned".into() }
    }

    /// `responses` maps prompt text to completion.
    pub fn from_prompts<'a>(responses: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let map = responses.into_iter().map(|(p, c)| (prompt_digest(p), c.to_string())).collect();
        MockProvider { source: MockSource::Map(map), model: "canned".into() }
    }

    pub fn response_path(dir: &Path, prompt: &str) -> PathBuf {
        dir.join(format!("{}.txt", prompt_digest(prompt)))
    }
}

impl ModelProvider for MockProvider {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::new("mock", &self.model, &serde_json::Value::Null)
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let digest = prompt_digest(prompt);
        match &self.source {
            MockSource::Map(map) => map
                .get(&digest)
                .cloned()
                .ok_or_else(|| ProviderError::fatal("mock", format!("no canned completion for prompt digest {digest}"))),
            MockSource::Dir(dir) => {
                let path = dir.join(format!("{digest}.txt"));
                fs::read_to_string(&path).map_err(|e| {
                    ProviderError::fatal("mock", format!("no canned completion for prompt digest {digest} ({}: {e})", path.display()))
                })
            }
        }
    }
}
