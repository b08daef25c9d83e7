use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, ChatBackend, ChatReply, ChatRequest, Usage};

/// One scripted route: a match key plus the replies it hands out in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptRule {
    /// Matches when the user prompt equals the string exactly.
    Exact { exact: String, replies: Vec<String> },
    /// Matches when the user prompt contains the string.
    Contains { contains: String, replies: Vec<String> },
}

impl ScriptRule {
    fn replies(&self) -> &[String] {
        match self {
            Self::Exact { replies, .. } | Self::Contains { replies, .. } => replies,
        }
    }
}

/// On-disk form of a scripted backend.
///
/// Exact rules win over substring rules; substring rules are tried in
/// declaration order; `default` answers everything else.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    /// Reported for every call instead of whitespace-token counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_usage: Option<Usage>,
}

impl Script {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

/// Deterministic offline backend driven by a [`Script`].
///
/// Each rule's queue is consumed in order; an exhausted queue keeps
/// repeating its last reply.
pub struct ScriptedBackend {
    script: Script,
    cursors: Mutex<Vec<usize>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let n = script.rules.len();
        Self {
            script,
            cursors: Mutex::new(vec![0; n]),
            calls: AtomicUsize::new(0),
        }
    }

    /// A backend that answers every request with `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        Self::new(Script {
            default: Some(reply.into()),
            ..Script::default()
        })
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.script.default = Some(reply.into());
        self
    }

    pub fn with_fixed_usage(mut self, usage: Usage) -> Self {
        self.script.fixed_usage = Some(usage);
        self
    }

    pub fn on_exact<I, S>(self, prompt: impl Into<String>, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.push_rule(ScriptRule::Exact {
            exact: prompt.into(),
            replies: replies.into_iter().map(Into::into).collect(),
        })
    }

    pub fn on_contains<I, S>(self, pattern: impl Into<String>, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.push_rule(ScriptRule::Contains {
            contains: pattern.into(),
            replies: replies.into_iter().map(Into::into).collect(),
        })
    }

    fn push_rule(mut self, rule: ScriptRule) -> Self {
        self.script.rules.push(rule);
        self.cursors.get_mut().unwrap().push(0);
        self
    }

    /// Number of `complete` calls served so far, including misses.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn find_rule(&self, prompt: &str) -> Option<usize> {
        let rules = &self.script.rules;
        rules
            .iter()
            .position(|r| matches!(r, ScriptRule::Exact { exact, .. } if exact == prompt))
            .or_else(|| {
                rules.iter().position(
                    |r| matches!(r, ScriptRule::Contains { contains, .. } if prompt.contains(contains.as_str())),
                )
            })
    }

    fn resolve(&self, req: &ChatRequest) -> Option<String> {
        if let Some(k) = self.find_rule(&req.user_prompt) {
            let replies = self.script.rules[k].replies();
            if let Some(last) = replies.last() {
                let mut cursors = self.cursors.lock().unwrap();
                let at = cursors[k];
                cursors[k] = at + 1;
                return Some(replies.get(at).unwrap_or(last).clone());
            }
        }
        self.script.default.clone()
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.resolve(req).ok_or_else(|| BackendError::ScriptMiss {
            fingerprint: req.fingerprint(),
        })?;
        let usage = self
            .script
            .fixed_usage
            .unwrap_or_else(|| Usage::synthesize(req, &text));
        Ok(ChatReply {
            text,
            usage,
            backend_kind: BackendKind::Scripted,
        })
    }
}
