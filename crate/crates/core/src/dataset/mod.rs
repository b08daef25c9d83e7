//! Conflict-corpus construction: chunking, supporting-evidence selection,
//! entity-swap misinformation, noise injection, controlled subsets, and
//! corpus statistics.

mod build;
mod chunk;
mod seeds;
mod stats;
mod subsets;

use serde::{Deserialize, Serialize};

pub use build::{build_corpus, build_instance, inject_misinformation, BuildFailure};
pub use chunk::{chunk_document, select_supporting_chunks, SupportSelection};
pub use seeds::{
    load_noise_pool, load_seed_entries, Disambiguation, DocumentSource, LocalCorpusSource,
    SeedEntry,
};
pub use stats::{compute_stats, load_release, CorpusStats, DimensionStats};
pub use subsets::{make_imbalance_subset, make_misinfo_subset, SkippedInstance, SubsetOutcome};

use crate::model::DEFAULT_CHUNK_WORDS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("insufficient supply: {0}")]
    InsufficientSupply(String),
    #[error("no chunk contains the answer {0:?}")]
    NoSupportingChunk(String),
    #[error("document text does not contain its linked answer {0:?}")]
    AnswerNotFound(String),
    #[error("replacement {0:?} equals the answer it replaces")]
    ReplacementEqualsAnswer(String),
    #[error("document {0:?} is not a supporting document")]
    NotSupporting(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("{name} = {value} is outside {low}..={high}")]
    OutOfRange {
        name: &'static str,
        value: usize,
        low: usize,
        high: usize,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub low: usize,
    pub high: usize,
}

impl IntRange {
    pub const fn new(low: usize, high: usize) -> Self {
        Self { low, high }
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.low..=self.high).contains(&v)
    }
}

/// Sampling ranges used when building one instance from a seed entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructionPolicy {
    pub answers_per_query: IntRange,
    pub docs_per_answer: IntRange,
    pub misinfo_docs: IntRange,
    pub noise_docs: IntRange,
    pub chunk_word_budget: usize,
    pub rng_seed: u64,
}

impl Default for ConstructionPolicy {
    fn default() -> Self {
        Self {
            answers_per_query: IntRange::new(1, 3),
            docs_per_answer: IntRange::new(1, 3),
            misinfo_docs: IntRange::new(0, 2),
            noise_docs: IntRange::new(0, 2),
            chunk_word_budget: DEFAULT_CHUNK_WORDS,
            rng_seed: 0,
        }
    }
}

impl ConstructionPolicy {
    pub fn validate(&self) -> Result<(), DatasetError> {
        for (name, r) in [
            ("answers_per_query", self.answers_per_query),
            ("docs_per_answer", self.docs_per_answer),
            ("misinfo_docs", self.misinfo_docs),
            ("noise_docs", self.noise_docs),
        ] {
            if r.low > r.high {
                return Err(DatasetError::InvalidPolicy(format!(
                    "{name}: low {} > high {}",
                    r.low, r.high
                )));
            }
        }
        if self.answers_per_query.low == 0 || self.docs_per_answer.low == 0 {
            return Err(DatasetError::InvalidPolicy(
                "answers_per_query and docs_per_answer must start at 1 or more".into(),
            ));
        }
        if self.chunk_word_budget == 0 {
            return Err(DatasetError::InvalidPolicy("chunk_word_budget must be at least 1".into()));
        }
        Ok(())
    }
}
