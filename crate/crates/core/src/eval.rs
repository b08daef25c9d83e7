//! Strict multi-answer scoring, token accounting, and corpus reports.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::{CallUsage, ChatBackend};
use crate::baselines::{MethodKind, MethodRunner, MethodTrace};
use crate::model::{canonicalize_answer, RamDocsInstance};

/// How exact match treats predictions outside the gold set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmMode {
    /// Predicted set must equal the gold set.
    #[default]
    Strict,
    /// Predicted set must cover the gold set and avoid every forbidden answer.
    Lenient,
}

impl fmt::Display for EmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Strict => "strict",
            Self::Lenient => "lenient",
        })
    }
}

impl FromStr for EmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "lenient" => Ok(Self::Lenient),
            other => Err(format!("unknown em mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("gold answer set is empty")]
    EmptyGold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub em: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn canonical_set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items
        .iter()
        .map(|s| canonicalize_answer(s.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Scores one prediction against the gold and forbidden answer sets.
/// All three are canonicalized before comparison.
pub fn judge_instance<P, G, F>(predicted: &[P], gold: &[G], forbidden: &[F], mode: EmMode) -> Result<Metrics, EvalError>
where
    P: AsRef<str>,
    G: AsRef<str>,
    F: AsRef<str>,
{
    let predicted = canonical_set(predicted);
    let gold = canonical_set(gold);
    let forbidden = canonical_set(forbidden);
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let hits = predicted.intersection(&gold).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hits / predicted.len() as f64
    };
    let recall = hits / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let em = match mode {
        EmMode::Strict => predicted == gold,
        EmMode::Lenient => gold.is_subset(&predicted) && predicted.is_disjoint(&forbidden),
    };
    Ok(Metrics {
        em: u8::from(em),
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InstanceUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub backend_calls: u64,
}

impl InstanceUsage {
    pub fn from_calls(calls: &[CallUsage]) -> Self {
        Self {
            input_tokens: calls.iter().map(|c| c.input_tokens).sum(),
            output_tokens: calls.iter().map(|c| c.output_tokens).sum(),
            backend_calls: calls.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceJudgment {
    pub instance_id: String,
    pub predicted: Vec<String>,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub degraded: bool,
    pub usage: InstanceUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl InstanceJudgment {
    fn failed(instance_id: &str, usage: InstanceUsage, error: String) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            predicted: Vec::new(),
            metrics: Metrics {
                em: 0,
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            },
            degraded: false,
            usage,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_name: String,
    pub backend: String,
    pub shuffle_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

/// Corpus-level aggregates; every mean is over instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: MethodKind,
    pub em_mode: EmMode,
    pub instances: usize,
    pub em: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub total_backend_calls: u64,
    pub degraded_rate: f64,
    pub errors: usize,
    pub metadata: RunMetadata,
}

impl EvalSummary {
    /// Single machine-parseable summary line.
    pub fn line(&self) -> String {
        format!(
            "method={} em_mode={} instances={} em={:.4} precision={:.4} recall={:.4} f1={:.4} mean_input_tokens={:.2} mean_output_tokens={:.2} errors={}",
            self.method,
            self.em_mode,
            self.instances,
            self.em,
            self.precision,
            self.recall,
            self.f1,
            self.mean_input_tokens,
            self.mean_output_tokens,
            self.errors
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub judgments: Vec<InstanceJudgment>,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

impl EvalReport {
    pub fn assemble(
        method: MethodKind,
        em_mode: EmMode,
        metadata: RunMetadata,
        judgments: Vec<InstanceJudgment>,
    ) -> Self {
        let n = judgments.len();
        let total_input_tokens = judgments.iter().map(|j| j.usage.input_tokens).sum();
        let total_output_tokens = judgments.iter().map(|j| j.usage.output_tokens).sum();
        let summary = EvalSummary {
            method,
            em_mode,
            instances: n,
            em: mean(judgments.iter().map(|j| f64::from(j.metrics.em)), n),
            precision: mean(judgments.iter().map(|j| j.metrics.precision), n),
            recall: mean(judgments.iter().map(|j| j.metrics.recall), n),
            f1: mean(judgments.iter().map(|j| j.metrics.f1), n),
            mean_input_tokens: mean(judgments.iter().map(|j| j.usage.input_tokens as f64), n),
            mean_output_tokens: mean(judgments.iter().map(|j| j.usage.output_tokens as f64), n),
            total_input_tokens,
            total_output_tokens,
            total_backend_calls: judgments.iter().map(|j| j.usage.backend_calls).sum(),
            degraded_rate: mean(judgments.iter().map(|j| f64::from(u8::from(j.degraded))), n),
            errors: judgments.iter().filter(|j| j.error.is_some()).count(),
            metadata,
        };
        Self { summary, judgments }
    }

    /// Per-instance lines followed by one summary line.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "type", rename_all = "snake_case")]
        enum Line<'a> {
            Instance(&'a InstanceJudgment),
            Summary(&'a EvalSummary),
        }
        let mut out = String::new();
        for j in &self.judgments {
            out.push_str(&serde_json::to_string(&Line::Instance(j)).expect("judgment serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Line::Summary(&self.summary)).expect("summary serializes"));
        out.push('\n');
        out
    }
}

/// One line of a transcripts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub instance_id: String,
    pub method: MethodKind,
    pub trace: MethodTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub em_mode: EmMode,
    /// Instances evaluated concurrently.
    pub concurrency: usize,
    pub metadata: RunMetadata,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            em_mode: EmMode::Strict,
            concurrency: 4,
            metadata: RunMetadata::default(),
        }
    }
}

async fn evaluate_one(
    instance: &RamDocsInstance,
    runner: &MethodRunner,
    backend: &dyn ChatBackend,
    em_mode: EmMode,
) -> (InstanceJudgment, TranscriptRecord) {
    let (judgment, trace, error) = match runner.run(backend, instance).await {
        Ok(outcome) => {
            let usage = InstanceUsage::from_calls(outcome.trace.usage());
            let predicted: Vec<String> = outcome.result.canonical_answers().into_iter().collect();
            let judgment = match judge_instance(&predicted, &instance.gold_answers, &instance.forbidden_answers, em_mode) {
                Ok(metrics) => InstanceJudgment {
                    instance_id: instance.id.clone(),
                    predicted,
                    metrics,
                    degraded: outcome.result.degraded,
                    usage,
                    error: None,
                },
                Err(e) => InstanceJudgment::failed(&instance.id, usage, e.to_string()),
            };
            (judgment, outcome.trace, None)
        }
        Err(failure) => {
            let usage = InstanceUsage::from_calls(failure.trace.usage());
            let judgment = InstanceJudgment::failed(&instance.id, usage, failure.message.clone());
            (judgment, failure.trace, Some(failure.message))
        }
    };
    let record = TranscriptRecord {
        instance_id: instance.id.clone(),
        method: runner.method,
        trace,
        error,
    };
    (judgment, record)
}

/// Runs `runner` over every instance and scores the results.
///
/// An instance whose run fails is scored 0 with its error recorded; the
/// corpus run itself never fails. Output order follows corpus order.
pub async fn evaluate_corpus(
    corpus: &[RamDocsInstance],
    runner: &MethodRunner,
    backend: &dyn ChatBackend,
    config: &EvalConfig,
) -> (EvalReport, Vec<TranscriptRecord>) {
    let results: Vec<(InstanceJudgment, TranscriptRecord)> = stream::iter(corpus)
        .map(|inst| evaluate_one(inst, runner, backend, config.em_mode))
        .buffered(config.concurrency.max(1))
        .collect()
        .await;
    let (judgments, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    (
        EvalReport::assemble(runner.method, config.em_mode, config.metadata.clone(), judgments),
        records,
    )
}

/// Scores pre-computed predictions, keyed by instance id.
pub fn judge_predictions(
    corpus: &[RamDocsInstance],
    predictions: &HashMap<String, Vec<String>>,
    method: MethodKind,
    em_mode: EmMode,
    metadata: RunMetadata,
) -> EvalReport {
    let judgments = corpus
        .iter()
        .map(|inst| match predictions.get(&inst.id) {
            None => InstanceJudgment::failed(&inst.id, InstanceUsage::default(), "no prediction".into()),
            Some(pred) => {
                let predicted: Vec<String> = canonical_set(pred).into_iter().collect();
                match judge_instance(&predicted, &inst.gold_answers, &inst.forbidden_answers, em_mode) {
                    Ok(metrics) => InstanceJudgment {
                        instance_id: inst.id.clone(),
                        predicted,
                        metrics,
                        degraded: false,
                        usage: InstanceUsage::default(),
                        error: None,
                    },
                    Err(e) => InstanceJudgment::failed(&inst.id, InstanceUsage::default(), e.to_string()),
                }
            }
        })
        .collect();
    EvalReport::assemble(method, em_mode, metadata, judgments)
}
