//! The debate loop: one agent per document, shuffle-then-aggregate, and
//! revision rounds until every agent keeps its answer or the round budget
//! runs out.

pub mod shuffle;

use futures::future::join_all;

use crate::backend::{BackendError, CallUsage, ChatBackend, ChatRequest, Sampling};
use crate::model::{
    AgentResponse, AggregateResult, ConvergenceComparison, DebateConfig, DebateTranscript,
    Document, Query, RoundRecord, StopReason,
};
use crate::prompting::{
    format_agent_responses, format_history, parse_agent_reply, parse_aggregate_reply, PromptError,
    TemplateName, TemplateSet,
};

#[derive(Debug, Clone, thiserror::Error)]
pub enum EngineError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("agent {agent} failed in round {round}: {source}")]
    Agent {
        agent: usize,
        round: usize,
        #[source]
        source: BackendError,
    },
    #[error("aggregator failed in round {round}: {source}")]
    Aggregator {
        round: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// A debate that ended on an error, with everything recorded up to that point.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct DebateFailure {
    pub transcript: DebateTranscript,
    #[source]
    pub error: EngineError,
}

/// One agent: a position and the single document it reads.
#[derive(Debug, Clone, Copy)]
pub struct AgentHandle<'a> {
    pub index: usize,
    pub document: &'a Document,
}

/// Shared state for running agents and the aggregator against one backend.
pub struct Engine<'a> {
    backend: &'a dyn ChatBackend,
    templates: &'a TemplateSet,
    model_name: String,
    sampling: Sampling,
}

impl<'a> Engine<'a> {
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

    fn request(&self, prompt: String) -> ChatRequest {
        ChatRequest::new(self.model_name.clone(), prompt).with_sampling(self.sampling)
    }

    /// One agent reply. Round 1 sees only the document; later rounds also
    /// see the previous round's aggregate.
    pub async fn agent_turn(
        &self,
        agent: AgentHandle<'_>,
        query: &Query,
        prior: Option<&AggregateResult>,
        round: usize,
    ) -> Result<(AgentResponse, CallUsage), EngineError> {
        if round == 0 {
            return Err(EngineError::Precondition("rounds are numbered from 1".into()));
        }
        let prompt = match (round, prior) {
            (1, None) => self.templates.render(
                TemplateName::AgentFirstRound,
                &[("question", &query.text), ("document", &agent.document.text)],
            )?,
            (1, Some(_)) => {
                return Err(EngineError::Precondition(
                    "round 1 agent turn given a prior aggregate".into(),
                ))
            }
            (_, None) => {
                return Err(EngineError::Precondition(format!(
                    "round {round} agent turn requires the prior aggregate"
                )))
            }
            (_, Some(prior)) => self.templates.render(
                TemplateName::AgentLaterRound,
                &[
                    ("question", &query.text),
                    ("document", &agent.document.text),
                    ("history", &format_history(prior)),
                ],
            )?,
        };
        let reply = self
            .backend
            .complete(&self.request(prompt))
            .await
            .map_err(|source| EngineError::Agent {
                agent: agent.index,
                round,
                source,
            })?;
        let parsed = parse_agent_reply(&reply.text);
        let usage = CallUsage::new(format!("agent {} round {round}", agent.index), reply.usage);
        Ok((
            AgentResponse {
                agent_index: agent.index,
                round,
                answer: parsed.answer,
                explanation: parsed.explanation,
                raw: reply.text,
                degraded: parsed.degraded,
            },
            usage,
        ))
    }

    /// Shuffles the responses with `seed`, then asks the aggregator to
    /// consolidate them. Returns the applied permutation: position `k` of the
    /// prompt lists `responses[perm[k]]`.
    pub async fn aggregate_round(
        &self,
        query: &Query,
        responses: &[AgentResponse],
        seed: u64,
        round: usize,
    ) -> Result<(AggregateResult, Vec<usize>, CallUsage), EngineError> {
        if responses.is_empty() {
            return Err(EngineError::Precondition("no responses to aggregate".into()));
        }
        if let Some(r) = responses.iter().find(|r| r.round != round) {
            return Err(EngineError::Precondition(format!(
                "response from agent {} is for round {}, not {round}",
                r.agent_index, r.round
            )));
        }
        let perm = shuffle::permutation(responses.len(), seed);
        let listed: Vec<&str> = perm.iter().map(|&k| responses[k].raw.as_str()).collect();
        let prompt = self.templates.render(
            TemplateName::Aggregator,
            &[
                ("question", &query.text),
                ("agent_responses_list", &format_agent_responses(&listed)),
            ],
        )?;
        let reply = self
            .backend
            .complete(&self.request(prompt))
            .await
            .map_err(|source| EngineError::Aggregator { round, source })?;
        let parsed = parse_aggregate_reply(&reply.text);
        let usage = CallUsage::new(format!("aggregator round {round}"), reply.usage);
        Ok((
            AggregateResult {
                round,
                answers: parsed.answers,
                explanation: parsed.explanation,
                raw: reply.text,
                degraded: parsed.degraded,
            },
            perm,
            usage,
        ))
    }

    /// Runs the full debate over `documents`, one agent per document.
    pub async fn run_debate(
        &self,
        instance_id: &str,
        query: &Query,
        documents: &[Document],
        config: &DebateConfig,
    ) -> Result<DebateTranscript, DebateFailure> {
        let mut transcript = DebateTranscript {
            instance_id: instance_id.to_string(),
            rounds: Vec::new(),
            stop_round: 0,
            stop_reason: StopReason::Aborted,
            usage: Vec::new(),
        };
        let fail = |transcript: DebateTranscript, error| Err(DebateFailure { transcript, error });
        if documents.is_empty() {
            return fail(transcript, EngineError::Precondition("debate needs at least one document".into()));
        }
        if config.max_rounds == 0 {
            return fail(transcript, EngineError::Precondition("max_rounds must be at least 1".into()));
        }

        let agents: Vec<AgentHandle> = documents
            .iter()
            .enumerate()
            .map(|(index, document)| AgentHandle { index, document })
            .collect();

        for round in 1..=config.max_rounds {
            let prior = transcript.rounds.last().map(|r| &r.aggregate);
            let turns = join_all(agents.iter().map(|a| self.agent_turn(*a, query, prior, round))).await;

            let mut responses = Vec::with_capacity(agents.len());
            let mut first_error = None;
            for turn in turns {
                match turn {
                    Ok((resp, usage)) => {
                        transcript.usage.push(usage);
                        responses.push(resp);
                    }
                    Err(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
            if let Some(error) = first_error {
                return fail(transcript, error);
            }

            let seed = shuffle::round_seed(config.shuffle_seed, round);
            let (aggregate, perm, usage) = match self.aggregate_round(query, &responses, seed, round).await {
                Ok(out) => out,
                Err(error) => return fail(transcript, error),
            };
            transcript.usage.push(usage);

            let converged = transcript
                .rounds
                .last()
                .is_some_and(|prev| answers_retained(&prev.responses, &responses, config.convergence_comparison));
            transcript.rounds.push(RoundRecord {
                round,
                responses,
                aggregate,
                shuffle_seed: seed,
                shuffle_permutation: perm,
            });
            transcript.stop_round = round;

            if converged {
                transcript.stop_reason = StopReason::Converged;
                return Ok(transcript);
            }
        }
        transcript.stop_reason = StopReason::MaxRounds;
        Ok(transcript)
    }
}

fn answer_key(r: &AgentResponse, mode: ConvergenceComparison) -> String {
    match mode {
        ConvergenceComparison::NormalizedAnswer => r.answer.canonical(),
        ConvergenceComparison::RawAnswer => r.answer.to_string(),
    }
}

/// True when every agent gave the same answer in both rounds.
pub fn answers_retained(
    previous: &[AgentResponse],
    current: &[AgentResponse],
    mode: ConvergenceComparison,
) -> bool {
    previous.len() == current.len()
        && previous
            .iter()
            .zip(current)
            .all(|(p, c)| p.agent_index == c.agent_index && answer_key(p, mode) == answer_key(c, mode))
}
