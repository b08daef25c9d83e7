//! Domain types shared by the engine, dataset, and evaluation layers.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::backend::CallUsage;

/// Default per-document word budget.
pub const DEFAULT_CHUNK_WORDS: usize = 100;

/// Normalizes an answer string for comparison.
///
/// Lowercases, strips ASCII and Unicode punctuation, drops the English
/// articles "a", "an", "the", and collapses whitespace. An answer made only
/// of articles keeps them. Idempotent.
pub fn canonicalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = stripped.split_whitespace().collect();
    let content: Vec<&str> = words
        .iter()
        .copied()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect();
    if content.is_empty() { words } else { content }.join(" ")
}

/// Number of whitespace-delimited words in `text`.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Returns true when `needle` occurs in `haystack` after both are canonicalized.
pub fn contains_answer(haystack: &str, needle: &str) -> bool {
    let needle = canonicalize_answer(needle);
    !needle.is_empty() && canonicalize_answer(haystack).contains(&needle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocLabel {
    Supporting,
    Misinformation,
    Noise,
}

impl fmt::Display for DocLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Supporting => "supporting",
            Self::Misinformation => "misinformation",
            Self::Noise => "noise",
        })
    }
}

/// A retrieved text chunk with its provenance label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: DocLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Document {
    pub fn supporting(id: impl Into<String>, text: impl Into<String>, answer: impl Into<String>) -> Self {
        Self::labeled(id, text, DocLabel::Supporting, Some(answer.into()))
    }

    pub fn misinformation(
        id: impl Into<String>,
        text: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        Self::labeled(id, text, DocLabel::Misinformation, Some(answer.into()))
    }

    pub fn noise(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::labeled(id, text, DocLabel::Noise, None)
    }

    fn labeled(
        id: impl Into<String>,
        text: impl Into<String>,
        label: DocLabel,
        linked_answer: Option<String>,
    ) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
            linked_answer,
            source: None,
            extra: Map::new(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }
}

/// One benchmark query with labeled documents and its answer sets.
///
/// Serialized as one line of the corpus file. Field names are fixed; any
/// unrecognized top-level field is kept in `extra` and written back out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamDocsInstance {
    pub id: String,
    pub question: String,
    pub documents: Vec<Document>,
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub forbidden_answers: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl RamDocsInstance {
    pub fn query(&self) -> Query {
        Query::new(self.id.clone(), self.question.clone())
    }

    pub fn count_label(&self, label: DocLabel) -> usize {
        self.documents.iter().filter(|d| d.label == label).count()
    }

    /// Documents with `label` whose linked answer canonically equals `answer`.
    pub fn docs_for<'a>(&'a self, label: DocLabel, answer: &str) -> impl Iterator<Item = &'a Document> + 'a {
        let key = canonicalize_answer(answer);
        self.documents.iter().filter(move |d| {
            d.label == label
                && d.linked_answer
                    .as_deref()
                    .is_some_and(|a| canonicalize_answer(a) == key)
        })
    }
}

/// Bounds checked by [`validate_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationLimits {
    pub max_gold: usize,
    pub max_docs_per_answer: Option<usize>,
    pub max_misinformation: Option<usize>,
    pub max_noise: Option<usize>,
    pub chunk_word_budget: usize,
}

impl Default for ValidationLimits {
    /// The bounds every constructor-produced instance satisfies.
    fn default() -> Self {
        Self {
            max_gold: 3,
            max_docs_per_answer: Some(3),
            max_misinformation: Some(2),
            max_noise: Some(2),
            chunk_word_budget: DEFAULT_CHUNK_WORDS,
        }
    }
}

impl ValidationLimits {
    /// Structural invariants only; no count ceilings on documents.
    pub fn structural() -> Self {
        Self {
            max_docs_per_answer: None,
            max_misinformation: None,
            max_noise: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every instance invariant, returning one entry per violation.
pub fn validate_instance(inst: &RamDocsInstance, limits: &ValidationLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };

    if inst.question.trim().is_empty() {
        push("question", "question text is empty".into());
    }

    let gold: BTreeSet<String> = inst.gold_answers.iter().map(|a| canonicalize_answer(a)).collect();
    let forbidden: BTreeSet<String> = inst
        .forbidden_answers
        .iter()
        .map(|a| canonicalize_answer(a))
        .collect();

    if gold.is_empty() {
        push("gold_answers", "gold_answers cardinality 0 < 1".into());
    } else if gold.len() > limits.max_gold {
        push(
            "gold_answers",
            format!("gold_answers cardinality {} > {}", gold.len(), limits.max_gold),
        );
    }
    if gold.len() != inst.gold_answers.len() {
        push("gold_answers", "duplicate gold answers after canonicalization".into());
    }

    for answer in &inst.gold_answers {
        let n = inst.docs_for(DocLabel::Supporting, answer).count();
        if n == 0 {
            push("gold_answers", format!("gold answer {answer:?} has no supporting document"));
        }
        if let Some(max) = limits.max_docs_per_answer {
            if n > max {
                push(
                    "gold_answers",
                    format!("gold answer {answer:?} has {n} supporting documents > {max}"),
                );
            }
        }
    }

    for answer in &inst.forbidden_answers {
        if inst.docs_for(DocLabel::Misinformation, answer).count() == 0 {
            push(
                "forbidden_answers",
                format!("forbidden answer {answer:?} has no misinformation document"),
            );
        }
        if inst.docs_for(DocLabel::Supporting, answer).count() > 0 {
            push(
                "forbidden_answers",
                format!("forbidden answer {answer:?} has a supporting document"),
            );
        }
    }

    for shared in gold.intersection(&forbidden) {
        push(
            "forbidden_answers",
            format!("answer {shared:?} is both gold and forbidden"),
        );
    }

    let mut seen_ids = HashSet::new();
    for (k, doc) in inst.documents.iter().enumerate() {
        let field = format!("documents[{k}]");
        if !seen_ids.insert(doc.id.as_str()) {
            push(&field, format!("duplicate document id {:?}", doc.id));
        }
        let words = word_count(&doc.text);
        if words > limits.chunk_word_budget {
            push(
                &field,
                format!("word count {words} > {}", limits.chunk_word_budget),
            );
        }
        match (doc.label, doc.linked_answer.as_deref()) {
            (DocLabel::Noise, Some(_)) => push(&field, "noise document has a linked answer".into()),
            (DocLabel::Noise, None) => {}
            (label, None) => push(&field, format!("{label} document has no linked answer")),
            (DocLabel::Supporting, Some(a)) => {
                if !contains_answer(&doc.text, a) {
                    push(&field, format!("supporting text does not contain {a:?}"));
                }
                if !gold.contains(&canonicalize_answer(a)) {
                    push(&field, format!("supporting document linked to non-gold answer {a:?}"));
                }
            }
            (DocLabel::Misinformation, Some(a)) => {
                if !contains_answer(&doc.text, a) {
                    push(&field, format!("misinformation text does not contain {a:?}"));
                }
                if !forbidden.contains(&canonicalize_answer(a)) {
                    push(
                        &field,
                        format!("misinformation document linked to non-forbidden answer {a:?}"),
                    );
                }
            }
        }
    }

    if let Some(max) = limits.max_misinformation {
        let n = inst.count_label(DocLabel::Misinformation);
        if n > max {
            push("documents", format!("misinformation document count {n} > {max}"));
        }
    }
    if let Some(max) = limits.max_noise {
        let n = inst.count_label(DocLabel::Noise);
        if n > max {
            push("documents", format!("noise document count {n} > {max}"));
        }
    }

    out
}

/// An agent's answer: extracted text, or the distinguished "unknown" value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Answer {
    Unknown,
    Text(String),
}

impl Answer {
    /// Maps any casing of "unknown" to [`Answer::Unknown`].
    pub fn from_text(text: &str) -> Self {
        let trimmed = text.trim();
        if canonicalize_answer(trimmed) == "unknown" {
            Self::Unknown
        } else {
            Self::Text(trimmed.to_string())
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Self::Unknown)
    }

    pub fn canonical(&self) -> String {
        match self {
            Self::Unknown => "unknown".to_string(),
            Self::Text(t) => canonicalize_answer(t),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unknown => f.write_str("Unknown"),
            Self::Text(t) => f.write_str(t),
        }
    }
}

// Unknown serializes as null so it never collides with an empty string.
impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Unknown => s.serialize_none(),
            Self::Text(t) => s.serialize_some(t),
        }
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match Option::<String>::deserialize(d)? {
            None => Self::Unknown,
            Some(t) => Self::Text(t),
        })
    }
}

/// One agent's parsed reply for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_index: usize,
    pub round: usize,
    pub answer: Answer,
    pub explanation: String,
    pub raw: String,
    #[serde(default)]
    pub degraded: bool,
}

/// A consolidated multi-answer reply, from the aggregator or a baseline.
///
/// `answers` keeps the surface strings as the model wrote them; an empty
/// list means "unknown".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateResult {
    pub round: usize,
    pub answers: Vec<String>,
    pub explanation: String,
    pub raw: String,
    #[serde(default)]
    pub degraded: bool,
}

impl AggregateResult {
    pub fn canonical_answers(&self) -> BTreeSet<String> {
        self.answers
            .iter()
            .map(|a| canonicalize_answer(a))
            .filter(|a| !a.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub responses: Vec<AgentResponse>,
    pub aggregate: AggregateResult,
    /// Seed the aggregator shuffle was drawn from.
    pub shuffle_seed: u64,
    /// `shuffle_permutation[k]` is the agent index listed at position `k`.
    pub shuffle_permutation: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxRounds,
    /// A backend error ended the debate; the transcript is partial.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub instance_id: String,
    pub rounds: Vec<RoundRecord>,
    pub stop_round: usize,
    pub stop_reason: StopReason,
    pub usage: Vec<CallUsage>,
}

impl DebateTranscript {
    /// The aggregate of the stopping round.
    pub fn final_answer(&self) -> Option<&AggregateResult> {
        self.rounds.last().map(|r| &r.aggregate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceComparison {
    #[default]
    NormalizedAnswer,
    RawAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub max_rounds: usize,
    pub shuffle_seed: u64,
    #[serde(default)]
    pub convergence_comparison: ConvergenceComparison,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            shuffle_seed: 0,
            convergence_comparison: ConvergenceComparison::NormalizedAnswer,
        }
    }
}
