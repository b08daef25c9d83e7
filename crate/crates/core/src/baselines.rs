//! Single-model baselines and the method-agnostic runner used by evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CallUsage, ChatBackend, ChatRequest, Sampling};
use crate::engine::{shuffle, DebateFailure, Engine};
use crate::model::{AggregateResult, DebateConfig, DebateTranscript, Query, RamDocsInstance};
use crate::prompting::{
    format_documents_list, parse_aggregate_reply, parse_list_reply, PromptError, TemplateName,
    TemplateSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    NoRag,
    ConcatPrompt,
    SelfReflection,
    MadamRag,
}

impl MethodKind {
    pub fn cli_name(self) -> &'static str {
        match self {
            Self::NoRag => "no-rag",
            Self::ConcatPrompt => "concat",
            Self::SelfReflection => "self-reflect",
            Self::MadamRag => "madam",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no-rag" | "no_rag" => Ok(Self::NoRag),
            "concat" | "concat_prompt" => Ok(Self::ConcatPrompt),
            "self-reflect" | "self_reflection" => Ok(Self::SelfReflection),
            "madam" | "madam_rag" => Ok(Self::MadamRag),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub label: String,
    pub reply: String,
}

/// Every intermediate reply of a sequential prompting chain.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainTranscript {
    pub steps: Vec<ChainStep>,
    pub usage: Vec<CallUsage>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BaselineError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("step \"{label}\" failed: {source}")]
    Step {
        label: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct BaselineFailure {
    pub transcript: ChainTranscript,
    #[source]
    pub error: BaselineError,
}

pub struct Baselines<'a> {
    backend: &'a dyn ChatBackend,
    templates: &'a TemplateSet,
    model_name: String,
    sampling: Sampling,
}

type ChainResult = Result<(AggregateResult, ChainTranscript), BaselineFailure>;

impl<'a> Baselines<'a> {
    pub fn new(backend: &'a dyn ChatBackend, templates: &'a TemplateSet, model_name: impl Into<String>) -> Self {
        Self {
            backend,
            templates,
            model_name: model_name.into(),
            sampling: Sampling::default(),
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    async fn step(
        &self,
        chain: &mut ChainTranscript,
        label: &str,
        template: TemplateName,
        slots: &[(&str, &str)],
    ) -> Result<String, BaselineError> {
        let prompt = self.templates.render(template, slots)?;
        let req = ChatRequest::new(self.model_name.clone(), prompt).with_sampling(self.sampling);
        let reply = self
            .backend
            .complete(&req)
            .await
            .map_err(|source| BaselineError::Step {
                label: label.to_string(),
                source,
            })?;
        chain.usage.push(CallUsage::new(label, reply.usage));
        chain.steps.push(ChainStep {
            label: label.to_string(),
            reply: reply.text.clone(),
        });
        Ok(reply.text)
    }

    /// Question only, no documents; one call.
    pub async fn run_no_rag(&self, query: &Query) -> ChainResult {
        let mut chain = ChainTranscript::default();
        match self
            .step(&mut chain, "answer", TemplateName::NoRag, &[("question", &query.text)])
            .await
        {
            Ok(raw) => {
                let parsed = parse_list_reply(&raw);
                Ok((
                    AggregateResult {
                        round: 1,
                        answers: parsed.answers,
                        explanation: parsed.explanation,
                        raw,
                        degraded: parsed.degraded,
                    },
                    chain,
                ))
            }
            Err(error) => Err(BaselineFailure { transcript: chain, error }),
        }
    }

    fn context(instance: &RamDocsInstance) -> Result<String, BaselineFailure> {
        if instance.documents.is_empty() {
            return Err(BaselineFailure {
                transcript: ChainTranscript::default(),
                error: BaselineError::Precondition("instance has no documents".into()),
            });
        }
        let texts: Vec<&str> = instance.documents.iter().map(|d| d.text.as_str()).collect();
        Ok(format_documents_list(&texts))
    }

    /// All documents in one prompt; one call.
    pub async fn run_concat(&self, instance: &RamDocsInstance) -> ChainResult {
        let context = Self::context(instance)?;
        let mut chain = ChainTranscript::default();
        match self
            .step(
                &mut chain,
                "answer",
                TemplateName::ConcatPrompt,
                &[("question", &instance.question), ("documents_list", &context)],
            )
            .await
        {
            Ok(raw) => Ok((aggregate_from(raw), chain)),
            Err(error) => Err(BaselineFailure { transcript: chain, error }),
        }
    }

    /// Initial answer, then `rounds` review/refine pairs: `1 + 2 * rounds` calls.
    pub async fn run_self_reflection(&self, instance: &RamDocsInstance, rounds: usize) -> ChainResult {
        let context = Self::context(instance)?;
        let mut chain = ChainTranscript::default();
        let q = instance.question.as_str();
        let result: Result<String, BaselineError> = async {
            let mut answer = self
                .step(
                    &mut chain,
                    "initial",
                    TemplateName::ReflectInitial,
                    &[("question", q), ("context", &context)],
                )
                .await?;
            for r in 1..=rounds {
                let review = self
                    .step(
                        &mut chain,
                        &format!("review, round {r}"),
                        TemplateName::ReflectReview,
                        &[("question", q), ("context", &context), ("answer", &answer)],
                    )
                    .await?;
                answer = self
                    .step(
                        &mut chain,
                        &format!("refine, round {r}"),
                        TemplateName::ReflectRefine,
                        &[
                            ("question", q),
                            ("context", &context),
                            ("answer", &answer),
                            ("review", &review),
                        ],
                    )
                    .await?;
            }
            Ok(answer)
        }
        .await;
        match result {
            Ok(raw) => Ok((aggregate_from(raw), chain)),
            Err(error) => Err(BaselineFailure { transcript: chain, error }),
        }
    }
}

fn aggregate_from(raw: String) -> AggregateResult {
    let parsed = parse_aggregate_reply(&raw);
    AggregateResult {
        round: 1,
        answers: parsed.answers,
        explanation: parsed.explanation,
        raw,
        degraded: parsed.degraded,
    }
}

/// What a method recorded while answering one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodTrace {
    Chain(ChainTranscript),
    Debate(DebateTranscript),
}

impl MethodTrace {
    pub fn usage(&self) -> &[CallUsage] {
        match self {
            Self::Chain(c) => &c.usage,
            Self::Debate(d) => &d.usage,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub result: AggregateResult,
    pub trace: MethodTrace,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{message}")]
pub struct MethodFailure {
    pub message: String,
    pub trace: MethodTrace,
}

impl From<BaselineFailure> for MethodFailure {
    fn from(f: BaselineFailure) -> Self {
        Self {
            message: f.error.to_string(),
            trace: MethodTrace::Chain(f.transcript),
        }
    }
}

impl From<DebateFailure> for MethodFailure {
    fn from(f: DebateFailure) -> Self {
        Self {
            message: f.error.to_string(),
            trace: MethodTrace::Debate(f.transcript),
        }
    }
}

/// Everything needed to run one method on any instance.
#[derive(Debug, Clone)]
pub struct MethodRunner {
    pub method: MethodKind,
    pub templates: TemplateSet,
    pub model_name: String,
    pub sampling: Sampling,
    /// `shuffle_seed` here is the corpus seed; each instance derives its own.
    pub debate: DebateConfig,
    pub reflection_rounds: usize,
}

impl MethodRunner {
    pub fn new(method: MethodKind, model_name: impl Into<String>) -> Self {
        Self {
            method,
            templates: TemplateSet::embedded(),
            model_name: model_name.into(),
            sampling: Sampling::default(),
            debate: DebateConfig::default(),
            reflection_rounds: 2,
        }
    }

    pub async fn run(
        &self,
        backend: &dyn ChatBackend,
        instance: &RamDocsInstance,
    ) -> Result<MethodOutcome, MethodFailure> {
        let baselines = Baselines::new(backend, &self.templates, self.model_name.clone())
            .with_sampling(self.sampling);
        let chain = |(result, chain): (AggregateResult, ChainTranscript)| MethodOutcome {
            result,
            trace: MethodTrace::Chain(chain),
        };
        match self.method {
            MethodKind::NoRag => Ok(chain(baselines.run_no_rag(&instance.query()).await?)),
            MethodKind::ConcatPrompt => Ok(chain(baselines.run_concat(instance).await?)),
            MethodKind::SelfReflection => Ok(chain(
                baselines
                    .run_self_reflection(instance, self.reflection_rounds)
                    .await?,
            )),
            MethodKind::MadamRag => {
                let engine = Engine::new(backend, &self.templates, self.model_name.clone())
                    .with_sampling(self.sampling);
                let config = DebateConfig {
                    shuffle_seed: shuffle::instance_seed(self.debate.shuffle_seed, &instance.id),
                    ..self.debate
                };
                let transcript = engine
                    .run_debate(&instance.id, &instance.query(), &instance.documents, &config)
                    .await?;
                let result = transcript
                    .final_answer()
                    .cloned()
                    .expect("a successful debate has at least one round");
                Ok(MethodOutcome {
                    result,
                    trace: MethodTrace::Debate(transcript),
                })
            }
        }
    }
}
