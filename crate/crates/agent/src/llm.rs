//! Chat-completion client for OpenAI-compatible endpoints.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{AgentError, Result};

pub const ENV_BASE_URL: &str = "CANOPY_LLM_BASE_URL";
pub const ENV_MODEL: &str = "CANOPY_LLM_MODEL";
pub const ENV_API_KEY: &str = "CANOPY_LLM_API_KEY";
pub const ENV_TIMEOUT: &str = "CANOPY_LLM_TIMEOUT_SECS";

const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Anything that turns a conversation into the next assistant message.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Clone, PartialEq, Eq)]
pub struct LlmConfig {
    /// Base URL up to and excluding `/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl fmt::Debug for LlmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl LlmConfig {
    /// Reads the endpoint settings from `CANOPY_LLM_*` variables. Only the
    /// base URL is required.
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let base_url = get(ENV_BASE_URL)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| AgentError::Config(format!("{ENV_BASE_URL} is not set")))?;
        let timeout = match get(ENV_TIMEOUT) {
            Some(s) => s
                .trim()
                .parse::<u64>()
                .map_err(|_| AgentError::Config(format!("{ENV_TIMEOUT} must be whole seconds, got {s:?}")))?,
            None => DEFAULT_TIMEOUT_SECS,
        };
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: get(ENV_MODEL).unwrap_or_else(|| "default".into()),
            api_key: get(ENV_API_KEY).filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(timeout),
        })
    }
}

pub struct HttpCompletionClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
}

impl HttpCompletionClient {
    pub fn new(config: LlmConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }
}

fn redact(text: &str, key: Option<&str>) -> String {
    match key {
        Some(k) if !k.is_empty() => text.replace(k, "<redacted>"),
        _ => text.to_string(),
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let url = format!("{}/chat/completions", self.config.base_url);
        let body = json!({"model": self.config.model, "messages": messages, "temperature": 0});
        let key = self.config.api_key.as_deref();
        log::debug!("POST {url} {}", redact(&body.to_string(), key));

        let mut req = self.http.post(&url).json(&body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| {
            if e.is_connect() || e.is_timeout() {
                AgentError::EndpointUnreachable(redact(&e.to_string(), key))
            } else {
                AgentError::Endpoint(redact(&e.to_string(), key))
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| AgentError::Endpoint(e.to_string()))?;
        log::debug!("{status} {}", redact(&text, key));
        if !status.is_success() {
            return Err(AgentError::Endpoint(format!("HTTP {status}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| AgentError::Endpoint(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AgentError::Endpoint("reply has no choices[0].message.content".into()))
    }
}
