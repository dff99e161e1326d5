use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use http_body_util::{BodyExt, Full};
use hyper::body::Bytes;
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::TokioExecutor;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::provider::{prompt_digest, ModelProvider, ProviderError, ProviderIdentity};

const NAME: &str = "http";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// Full chat-completion URL. Plain `http://` only; put a TLS proxy in front
    /// of remote endpoints.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// JSON Lines file receiving every request and response.
    pub audit_log: PathBuf,
}

fn default_attempts() -> u32 {
    3
}

fn default_timeout() -> u64 {
    120
}

/// Chat-completion client: POSTs `{"model", "messages", "temperature"}` and
/// reads `choices[0].message.content`. Blocking; do not call from inside an
/// async runtime.
pub struct HttpProvider {
    config: HttpProviderConfig,
    runtime: tokio::runtime::Runtime,
    client: Client<HttpConnector, Full<Bytes>>,
    audit: Mutex<File>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        if !config.url.starts_with("http://") {
            return Err(ProviderError::fatal(NAME, format!("unsupported URL {:?}: only http:// is supported", config.url)));
        }
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| ProviderError::fatal(NAME, e.to_string()))?;
        let audit = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&config.audit_log)
            .map_err(|e| ProviderError::fatal(NAME, format!("{}: {e}", config.audit_log.display())))?;
        let client = Client::builder(TokioExecutor::new()).build_http();
        Ok(HttpProvider { config, runtime, client, audit: Mutex::new(audit) })
    }

    fn params(&self) -> serde_json::Value {
        json!({ "url": self.config.url, "temperature": self.config.temperature })
    }

    fn audit(&self, record: serde_json::Value) {
        let mut f = self.audit.lock().expect("audit lock");
        // Audit failure must not hide the completion; it is reported on stderr.
        if let Err(e) = writeln!(f, "{record}").and_then(|_| f.flush()) {
            eprintln!("audit log {}: {e}", self.config.audit_log.display());
        }
    }

    fn attempt(&self, body: &str, token: Option<&str>) -> Result<String, ProviderError> {
        let mut req = hyper::Request::post(&self.config.url).header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = req.body(Full::new(Bytes::from(body.to_string()))).map_err(|e| ProviderError::fatal(NAME, e.to_string()))?;
        let transient = |message: String, retry_after: Option<Duration>| ProviderError {
            provider: NAME.into(),
            message,
            attempts: 1,
            retryable: true,
            retry_after,
        };
        self.runtime.block_on(async {
            let call = async {
                let resp = self.client.request(req).await.map_err(|e| transient(e.to_string(), None))?;
                let status = resp.status();
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                let bytes = resp.into_body().collect().await.map_err(|e| transient(e.to_string(), None))?.to_bytes();
                let text = String::from_utf8_lossy(&bytes).into_owned();
                if status.is_success() {
                    Ok(text)
                } else if status.as_u16() == 429 || status.is_server_error() {
                    Err(transient(format!("HTTP {status}: {text}"), retry_after))
                } else {
                    Err(ProviderError::fatal(NAME, format!("HTTP {status}: {text}")))
                }
            };
            match tokio::time::timeout(Duration::from_secs(self.config.timeout_secs), call).await {
                Ok(r) => r,
                Err(_) => Err(transient(format!("timed out after {} s", self.config.timeout_secs), None)),
            }
        })
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn completion_content(body: &str) -> Result<String, String> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| "response lacks choices[0].message.content".to_string())
}

impl ModelProvider for HttpProvider {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::new(NAME, &self.config.model, &self.params())
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let token = match &self.config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::fatal(NAME, format!("environment variable {var} is not set")))?),
            None => None,
        };
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        })
        .to_string();
        let digest = prompt_digest(prompt);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let result = self.attempt(&body, token.as_deref());
            self.audit(json!({
                "at": chrono::Utc::now().to_rfc3339(),
                "provider": self.identity().to_string(),
                "prompt_sha256": digest,
                "attempt": attempts,
                "request": body,
                "response": result.as_ref().ok(),
                "error": result.as_ref().err().map(|e| e.message.clone()),
            }));
            match result {
                Ok(text) => {
                    return completion_content(&text).map_err(|m| ProviderError { attempts, ..ProviderError::fatal(NAME, m) });
                }
                Err(e) if e.retryable && attempts < self.config.max_attempts.max(1) => {
                    let wait = e.retry_after.unwrap_or(Duration::from_millis(200 << attempts.min(6)));
                    std::thread::sleep(wait.min(Duration::from_secs(30)));
                }
                Err(e) => return Err(ProviderError { attempts, ..e }),
            }
        }
    }
}
