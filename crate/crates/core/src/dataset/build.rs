use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::RegexBuilder;
use serde_json::Map;

use crate::engine::shuffle::instance_seed;
use crate::model::{
    canonicalize_answer, contains_answer, word_count, DocLabel, Document, RamDocsInstance,
};

use super::chunk::{chunk_document, select_supporting_chunks};
use super::seeds::SeedEntry;
use super::{ConstructionPolicy, DatasetError, IntRange};

/// Entity swap: replaces every occurrence (case-insensitive) of the
/// document's linked answer with `replacement`.
pub fn inject_misinformation(doc: &Document, replacement: &str) -> Result<Document, DatasetError> {
    if doc.label != DocLabel::Supporting {
        return Err(DatasetError::NotSupporting(doc.id.clone()));
    }
    let answer = doc.linked_answer.as_deref().unwrap_or_default();
    if canonicalize_answer(replacement) == canonicalize_answer(answer) {
        return Err(DatasetError::ReplacementEqualsAnswer(answer.to_string()));
    }
    let pattern = RegexBuilder::new(&regex::escape(answer.trim()))
        .case_insensitive(true)
        .build()
        .expect("escaped literal is a valid pattern");
    if answer.trim().is_empty() || !pattern.is_match(&doc.text) {
        return Err(DatasetError::AnswerNotFound(answer.to_string()));
    }
    let text = pattern
        .replace_all(&doc.text, regex::NoExpand(replacement))
        .into_owned();
    Ok(Document {
        id: format!("{}-misinfo", doc.id),
        text,
        label: DocLabel::Misinformation,
        linked_answer: Some(replacement.to_string()),
        source: doc.source.clone(),
        extra: doc.extra.clone(),
    })
}

fn sample(rng: &mut impl Rng, range: IntRange) -> usize {
    rng.random_range(range.low..=range.high)
}

struct AnswerSupply {
    answer: String,
    source: String,
    chunks: Vec<String>,
}

fn dedup_chunks(texts: &[String], budget: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    texts
        .iter()
        .flat_map(|t| chunk_document(t, budget))
        .filter(|c| seen.insert(c.clone()))
        .collect()
}

/// Builds one instance from a seed entry.
///
/// Answer count, documents per answer, misinformation count, and noise count
/// are each drawn uniformly from the policy ranges and then clamped by what
/// the entry can supply. Replacement entities for misinformation come from
/// the answers of disambiguations that were not chosen, then from
/// `distractors`.
pub fn build_instance(
    entry: &SeedEntry,
    policy: &ConstructionPolicy,
    noise_pool: &[Document],
    distractors: &[String],
    rng: &mut impl Rng,
) -> Result<RamDocsInstance, DatasetError> {
    policy.validate()?;
    if noise_pool.len() < policy.noise_docs.high {
        return Err(DatasetError::InsufficientSupply(format!(
            "noise pool has {} documents, policy needs up to {}",
            noise_pool.len(),
            policy.noise_docs.high
        )));
    }
    let budget = policy.chunk_word_budget;

    let mut seen_answers = HashSet::new();
    let mut usable: Vec<AnswerSupply> = Vec::new();
    let mut unusable_answers: Vec<String> = Vec::new();
    for d in &entry.disambiguations {
        let canon = canonicalize_answer(&d.surface_answer);
        if canon.is_empty() || !seen_answers.insert(canon) {
            continue;
        }
        let chunks: Vec<String> = dedup_chunks(&d.candidate_documents, budget)
            .into_iter()
            .filter(|c| contains_answer(c, &d.surface_answer))
            .collect();
        if chunks.is_empty() {
            unusable_answers.push(d.surface_answer.clone());
        } else {
            usable.push(AnswerSupply {
                answer: d.surface_answer.clone(),
                source: d.disambiguated_query.clone(),
                chunks,
            });
        }
    }
    if usable.is_empty() {
        return Err(DatasetError::InsufficientSupply("supporting chunks".into()));
    }

    let n_answers = sample(rng, policy.answers_per_query).min(usable.len());
    let mut picked = rand::seq::index::sample(rng, usable.len(), n_answers).into_vec();
    picked.sort_unstable();
    let picked_set: HashSet<usize> = picked.iter().copied().collect();

    let mut sibling_answers: Vec<String> = usable
        .iter()
        .enumerate()
        .filter(|(i, _)| !picked_set.contains(i))
        .map(|(_, s)| s.answer.clone())
        .collect();
    sibling_answers.extend(unusable_answers);

    let mut documents = Vec::new();
    let mut gold_answers = Vec::new();
    let mut per_answer: Vec<Vec<Document>> = Vec::new();
    for &i in &picked {
        let supply = &usable[i];
        let k = sample(rng, policy.docs_per_answer);
        let sel = select_supporting_chunks(&supply.chunks, &supply.answer, k)?;
        let used: Vec<Document> = sel
            .documents
            .into_iter()
            .map(|(_, d)| d.with_source(supply.source.clone()))
            .collect();
        documents.extend(used.iter().cloned());
        gold_answers.push(supply.answer.clone());
        per_answer.push(used);
    }

    let gold_canon: HashSet<String> = gold_answers.iter().map(|a| canonicalize_answer(a)).collect();
    let mut replacements: Vec<String> = Vec::new();
    let mut seen_repl = HashSet::new();
    for r in sibling_answers.iter().chain(distractors) {
        let c = canonicalize_answer(r);
        if !c.is_empty() && c != "unknown" && !gold_canon.contains(&c) && seen_repl.insert(c) {
            replacements.push(r.clone());
        }
    }
    // Siblings are preferred; fall back to distractors only when none exist.
    let n_siblings = replacements
        .iter()
        .filter(|r| sibling_answers.iter().any(|s| canonicalize_answer(s) == canonicalize_answer(r)))
        .count();
    let replacement_pool: &[String] = if n_siblings > 0 {
        &replacements[..n_siblings]
    } else {
        &replacements
    };

    let n_misinfo = sample(rng, policy.misinfo_docs);
    let mut forbidden: Vec<String> = Vec::new();
    let mut used_pairs: HashSet<(String, String)> = HashSet::new();
    const ATTEMPTS: usize = 16;
    for _ in 0..n_misinfo {
        if replacement_pool.is_empty() {
            break;
        }
        for _ in 0..ATTEMPTS {
            let used = per_answer.choose(rng).expect("at least one gold answer");
            let base = used.choose(rng).expect("every gold answer has a document");
            let replacement = replacement_pool.choose(rng).expect("pool is non-empty");
            if !used_pairs.insert((base.text.clone(), replacement.clone())) {
                continue;
            }
            let Ok(doc) = inject_misinformation(base, replacement) else {
                continue;
            };
            if word_count(&doc.text) > budget || !contains_answer(&doc.text, replacement) {
                continue;
            }
            if !forbidden
                .iter()
                .any(|f| canonicalize_answer(f) == canonicalize_answer(replacement))
            {
                forbidden.push(replacement.clone());
            }
            documents.push(doc);
            break;
        }
    }

    let banned: Vec<&String> = gold_answers.iter().chain(&forbidden).collect();
    let eligible_noise: Vec<&Document> = noise_pool
        .iter()
        .filter(|d| word_count(&d.text) <= budget && !banned.iter().any(|a| contains_answer(&d.text, a)))
        .collect();
    let n_noise = sample(rng, policy.noise_docs).min(eligible_noise.len());
    for d in eligible_noise.choose_multiple(rng, n_noise) {
        let mut doc = (*d).clone();
        doc.label = DocLabel::Noise;
        doc.linked_answer = None;
        documents.push(doc);
    }

    documents.shuffle(rng);
    let id = entry.ambiguous_query.id.clone();
    for (k, d) in documents.iter_mut().enumerate() {
        d.id = format!("{id}-d{k}");
    }

    Ok(RamDocsInstance {
        id,
        question: entry.ambiguous_query.text.clone(),
        documents,
        gold_answers,
        forbidden_answers: forbidden,
        extra: Map::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildFailure {
    pub entry_id: String,
    pub error: DatasetError,
}

/// Builds every entry with its own generator derived from
/// `(policy.rng_seed, entry id)`, so results do not depend on entry order
/// or on which other entries fail.
pub fn build_corpus(
    entries: &[SeedEntry],
    policy: &ConstructionPolicy,
    noise_pool: &[Document],
    distractors: &[String],
) -> (Vec<RamDocsInstance>, Vec<BuildFailure>) {
    let mut corpus = Vec::new();
    let mut failures = Vec::new();
    for entry in entries {
        let id = &entry.ambiguous_query.id;
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(policy.rng_seed, id));
        match build_instance(entry, policy, noise_pool, distractors, &mut rng) {
            Ok(inst) => corpus.push(inst),
            Err(error) => {
                tracing::warn!(entry = %id, %error, "skipping seed entry");
                failures.push(BuildFailure {
                    entry_id: id.clone(),
                    error,
                });
            }
        }
    }
    (corpus, failures)
}
