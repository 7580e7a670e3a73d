use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, LlmError};

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Connection settings for an OpenAI-style chat-completions endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub temperature: f32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            temperature: 0.0,
        }
    }
}

impl LlmConfig {
    /// Reads `NOTECAST_LLM_ENDPOINT`, `NOTECAST_LLM_MODEL`,
    /// `NOTECAST_LLM_API_KEY` (or `OPENAI_API_KEY`),
    /// `NOTECAST_LLM_TIMEOUT_SECS` and `NOTECAST_LLM_TEMPERATURE`.
    pub fn from_env() -> Self {
        let mut cfg = LlmConfig::default();
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("NOTECAST_LLM_ENDPOINT") {
            cfg.endpoint = v;
        }
        if let Some(v) = var("NOTECAST_LLM_MODEL") {
            cfg.model = v;
        }
        cfg.api_key = var("NOTECAST_LLM_API_KEY").or_else(|| var("OPENAI_API_KEY"));
        if let Some(secs) = var("NOTECAST_LLM_TIMEOUT_SECS").and_then(|v| v.parse().ok()) {
            cfg.timeout = Duration::from_secs(secs);
        }
        if let Some(t) = var("NOTECAST_LLM_TEMPERATURE").and_then(|v| v.parse().ok()) {
            cfg.temperature = t;
        }
        cfg
    }
}

pub struct HttpProvider {
    config: LlmConfig,
    // Built on first use: a blocking client must not be created on an
    // async runtime thread.
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpProvider {
    pub fn new(config: LlmConfig) -> Self {
        HttpProvider {
            config,
            client: OnceLock::new(),
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, LlmError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let built = reqwest::blocking::Client::builder()
            .timeout(self.config.timeout)
            .build()
            .map_err(|e| LlmError::ProviderUnreachable(e.to_string()))?;
        Ok(self.client.get_or_init(|| built))
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let mut call = self.client()?.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call
            .send()
            .map_err(|e| LlmError::ProviderUnreachable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| LlmError::ProviderUnreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Provider {
                status: status.as_u16(),
                body: text,
            });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| LlmError::Provider {
            status: status.as_u16(),
            body: format!("unreadable completion: {e}"),
        })?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Provider {
                status: status.as_u16(),
                body: "completion has no message content".into(),
            })
    }
}

/// Answers from `<dir>/<request hash>.txt`.
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayProvider { dir: dir.into() }
    }
}

pub fn fixture_path(dir: &Path, request: &ChatRequest) -> PathBuf {
    dir.join(format!("{}.txt", request.hash()))
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        fs::read_to_string(fixture_path(&self.dir, request)).map_err(|_| LlmError::FixtureMiss {
            hash: request.hash(),
        })
    }
}

/// Forwards to another provider and stores every reply as a replay fixture.
pub struct RecordingProvider {
    inner: Box<dyn ChatProvider>,
    dir: PathBuf,
}

impl RecordingProvider {
    pub fn new(inner: Box<dyn ChatProvider>, dir: impl Into<PathBuf>) -> Self {
        RecordingProvider {
            inner,
            dir: dir.into(),
        }
    }
}

impl ChatProvider for RecordingProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let reply = self.inner.complete(request)?;
        let path = fixture_path(&self.dir, request);
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(&self.dir)?;
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, &reply)?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| LlmError::Io(e.to_string()))?;
        Ok(reply)
    }
}
