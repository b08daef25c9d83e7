use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::AggregateResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    AgentFirstRound,
    AgentLaterRound,
    Aggregator,
    NoRag,
    ConcatPrompt,
    ReflectInitial,
    ReflectReview,
    ReflectRefine,
}

impl TemplateName {
    pub const ALL: [TemplateName; 8] = [
        Self::AgentFirstRound,
        Self::AgentLaterRound,
        Self::Aggregator,
        Self::NoRag,
        Self::ConcatPrompt,
        Self::ReflectInitial,
        Self::ReflectReview,
        Self::ReflectRefine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AgentFirstRound => "agent_first_round",
            Self::AgentLaterRound => "agent_later_round",
            Self::Aggregator => "aggregator",
            Self::NoRag => "no_rag",
            Self::ConcatPrompt => "concat_prompt",
            Self::ReflectInitial => "reflect_initial",
            Self::ReflectReview => "reflect_review",
            Self::ReflectRefine => "reflect_refine",
        }
    }

    fn embedded(self) -> &'static str {
        match self {
            Self::AgentFirstRound => include_str!("../../templates/agent_first_round.txt"),
            Self::AgentLaterRound => include_str!("../../templates/agent_later_round.txt"),
            Self::Aggregator => include_str!("../../templates/aggregator.txt"),
            Self::NoRag => include_str!("../../templates/no_rag.txt"),
            Self::ConcatPrompt => include_str!("../../templates/concat_prompt.txt"),
            Self::ReflectInitial => include_str!("../../templates/reflect_initial.txt"),
            Self::ReflectReview => include_str!("../../templates/reflect_review.txt"),
            Self::ReflectRefine => include_str!("../../templates/reflect_refine.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Names a template may reference as `{slot}`. Anything else in braces,
/// including the `{}` placeholders of the reply formats, is literal text.
const SLOT_NAMES: [&str; 8] = [
    "question",
    "document",
    "documents_list",
    "history",
    "answer",
    "review",
    "agent_responses_list",
    "context",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template} requires slot {{{slot}}} but none was supplied")]
    MissingSlot { template: TemplateName, slot: String },
    #[error("reading template override {path}: {message}")]
    Override { path: String, message: String },
}

impl PromptError {
    pub fn missing_slot(&self) -> Option<&str> {
        match self {
            Self::MissingSlot { slot, .. } => Some(slot),
            Self::Override { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    bodies: Vec<String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::embedded()
    }
}

fn strip_final_newline(s: &str) -> String {
    s.strip_suffix('\n').unwrap_or(s).to_string()
}

impl TemplateSet {
    pub fn embedded() -> Self {
        Self {
            bodies: TemplateName::ALL
                .iter()
                .map(|t| strip_final_newline(t.embedded()))
                .collect(),
        }
    }

    /// Embedded templates, replaced by `<dir>/<name>.txt` wherever such a file exists.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::embedded();
        for (k, name) in TemplateName::ALL.iter().enumerate() {
            let path = dir.join(format!("{}.txt", name.as_str()));
            if path.is_file() {
                let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Override {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.bodies[k] = strip_final_newline(&body);
            }
        }
        Ok(set)
    }

    pub fn body(&self, name: TemplateName) -> &str {
        let k = TemplateName::ALL.iter().position(|t| *t == name).unwrap();
        &self.bodies[k]
    }

    /// Substitutes every `{slot}` in the template. Substituted text is not rescanned.
    pub fn render(&self, name: TemplateName, slots: &[(&str, &str)]) -> Result<String, PromptError> {
        let body = self.body(name);
        let mut out = String::with_capacity(body.len() + 256);
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let close = tail.find('}');
            let key = close.map(|c| &tail[1..c]);
            match key {
                Some(key) if SLOT_NAMES.contains(&key) => {
                    let value = slots
                        .iter()
                        .find(|(k, _)| *k == key)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::MissingSlot {
                            template: name,
                            slot: key.to_string(),
                        })?;
                    out.push_str(value);
                    rest = &tail[key.len() + 2..];
                }
                _ => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// `Document k: text` lines, numbered from 1.
pub fn format_documents_list<S: AsRef<str>>(texts: &[S]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(k, t)| format!("Document {}: {}", k + 1, t.as_ref().trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `Agent k: reply` lines, numbered by list position from 1.
pub fn format_agent_responses<S: AsRef<str>>(replies: &[S]) -> String {
    replies
        .iter()
        .enumerate()
        .map(|(k, t)| format!("Agent {}: {}", k + 1, t.as_ref().trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The history block handed to agents after round one.
pub fn format_history(prior: &AggregateResult) -> String {
    let answers = if prior.answers.is_empty() {
        "unknown".to_string()
    } else {
        prior.answers.join(", ")
    };
    format!(
        "Aggregated answer: {answers}; Explanation: {}",
        prior.explanation.trim()
    )
}
