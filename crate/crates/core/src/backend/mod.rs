//! Chat-completion backends.
//!
//! Every backend implements [`ChatBackend`]. Three are provided: a live HTTP
//! client speaking the chat-completions wire format, a scripted backend for
//! offline tests, and a replay backend fed by a recording made with
//! [`RecordingBackend`].

mod live;
mod replay;
mod scripted;

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

pub use live::{LiveBackend, LiveConfig};
pub use replay::{RecordEntry, RecordingBackend, ReplayBackend};
pub use scripted::{Script, ScriptRule, ScriptedBackend};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Sent as a system message when non-empty.
    pub system_prompt: String,
    pub user_prompt: String,
    pub model_name: String,
    pub sampling: Sampling,
}

impl ChatRequest {
    pub fn new(model_name: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: String::new(),
            user_prompt: user_prompt.into(),
            model_name: model_name.into(),
            sampling: Sampling::default(),
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    /// Stable hex digest of every field that influences the reply.
    ///
    /// Replay lookups key on this, so it must not depend on call order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.system_prompt, &self.user_prompt, &self.model_name] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update(self.sampling.temperature.to_bits().to_le_bytes());
        h.update(self.sampling.max_output_tokens.to_le_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    /// Whitespace-token counts, used when a backend reports no usage.
    pub fn synthesize(req: &ChatRequest, reply: &str) -> Self {
        let words = |s: &str| s.split_whitespace().count() as u64;
        Self {
            input_tokens: words(&req.system_prompt) + words(&req.user_prompt),
            output_tokens: words(reply),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Scripted,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    pub usage: Usage,
    pub backend_kind: BackendKind,
}

/// Token usage of one backend call, labeled with the step that made it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallUsage {
    pub label: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl CallUsage {
    pub fn new(label: impl Into<String>, usage: Usage) -> Self {
        Self {
            label: label.into(),
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure (status {status:?}) for request {fingerprint}: {message}")]
    Transport {
        fingerprint: String,
        status: Option<u16>,
        message: String,
    },
    #[error("credential rejected (status {status}) for request {fingerprint}")]
    Auth { fingerprint: String, status: u16 },
    #[error("malformed reply for request {fingerprint}: {message}")]
    MalformedReply { fingerprint: String, message: String },
    #[error("no scripted or recorded reply for request {fingerprint}")]
    ScriptMiss { fingerprint: String },
    #[error("recording sink failed for request {fingerprint}: {message}")]
    Sink { fingerprint: String, message: String },
}

impl BackendError {
    pub fn fingerprint(&self) -> &str {
        match self {
            Self::Transport { fingerprint, .. }
            | Self::Auth { fingerprint, .. }
            | Self::MalformedReply { fingerprint, .. }
            | Self::ScriptMiss { fingerprint }
            | Self::Sink { fingerprint, .. } => fingerprint,
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError>;
}

#[async_trait]
impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        (**self).complete(req).await
    }
}

/// Caps the number of concurrent in-flight calls to the wrapped backend.
pub struct InFlightLimit<B> {
    inner: B,
    permits: Semaphore,
}

impl<B> InFlightLimit<B> {
    pub fn new(inner: B, max_in_flight: usize) -> Self {
        Self {
            inner,
            permits: Semaphore::new(max_in_flight.max(1)),
        }
    }
}

#[async_trait]
impl<B: ChatBackend> ChatBackend for InFlightLimit<B> {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        self.inner.complete(req).await
    }
}
