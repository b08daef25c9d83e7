use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, BackendKind, ChatBackend, ChatReply, ChatRequest, Usage};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base URL (e.g. `https://host/v1`) or a full `.../chat/completions` URL.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Client for the chat-completions REST shape.
pub struct LiveBackend {
    config: LiveConfig,
    url: String,
    http: reqwest::Client,
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Serialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Retry(BackendError),
    Fail(BackendError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, reqwest::Error> {
        let http = reqwest::Client::builder().timeout(config.timeout).build()?;
        Ok(Self {
            url: config.url(),
            config,
            http,
        })
    }

    fn body(req: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        messages.push(json!({"role": "user", "content": req.user_prompt}));
        json!({
            "model": req.model_name,
            "messages": messages,
            "temperature": req.sampling.temperature,
            "max_tokens": req.sampling.max_output_tokens,
        })
    }

    async fn attempt(&self, req: &ChatRequest, fingerprint: &str) -> Result<ChatReply, Attempt> {
        let transport = |status: Option<u16>, message: String| BackendError::Transport {
            fingerprint: fingerprint.to_string(),
            status,
            message,
        };
        let mut builder = self.http.post(&self.url).json(&Self::body(req));
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .await
            .map_err(|e| Attempt::Retry(transport(None, e.to_string())))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Attempt::Fail(BackendError::Auth {
                fingerprint: fingerprint.to_string(),
                status: status.as_u16(),
            }));
        }
        let text = resp
            .text()
            .await
            .map_err(|e| Attempt::Retry(transport(Some(status.as_u16()), e.to_string())))?;
        if !status.is_success() {
            let err = transport(Some(status.as_u16()), text);
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            });
        }
        let malformed = |message: String| {
            Attempt::Fail(BackendError::MalformedReply {
                fingerprint: fingerprint.to_string(),
                message,
            })
        };
        let wire: WireReply = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| malformed("reply has no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        let usage = match wire.usage {
            Some(u) => Usage {
                input_tokens: u.prompt_tokens,
                output_tokens: u.completion_tokens,
            },
            None => Usage::synthesize(req, &content),
        };
        Ok(ChatReply {
            text: content,
            usage,
            backend_kind: BackendKind::Live,
        })
    }
}

#[async_trait]
impl ChatBackend for LiveBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        let fingerprint = req.fingerprint();
        let mut backoff = self.config.initial_backoff;
        let attempts = self.config.max_attempts.max(1);
        for attempt in 1..=attempts {
            match self.attempt(req, &fingerprint).await {
                Ok(reply) => return Ok(reply),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt == attempts => return Err(e),
                Err(Attempt::Retry(e)) => {
                    tracing::warn!(attempt, error = %e, "retrying chat completion");
                    tokio::time::sleep(backoff).await;
                    backoff *= 2;
                }
            }
        }
        unreachable!("loop returns on the final attempt")
    }
}
