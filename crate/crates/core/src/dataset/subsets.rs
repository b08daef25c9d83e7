use std::collections::HashSet;

use serde_json::Map;

use crate::model::{canonicalize_answer, word_count, DocLabel, Document, RamDocsInstance};

use super::build::inject_misinformation;
use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedInstance {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetOutcome {
    pub instances: Vec<RamDocsInstance>,
    pub skipped: Vec<SkippedInstance>,
}

fn check_level(name: &'static str, value: usize) -> Result<(), DatasetError> {
    if (1..=3).contains(&value) {
        Ok(())
    } else {
        Err(DatasetError::OutOfRange {
            name,
            value,
            low: 1,
            high: 3,
        })
    }
}

fn finish(outcome: SubsetOutcome, what: &str) -> Result<SubsetOutcome, DatasetError> {
    for s in &outcome.skipped {
        tracing::info!(instance = %s.id, reason = %s.reason, "skipped for {what} subset");
    }
    if outcome.instances.is_empty() {
        return Err(DatasetError::InsufficientSupply(format!(
            "no instance qualifies for the {what} subset"
        )));
    }
    Ok(outcome)
}

fn supporting<'a>(inst: &'a RamDocsInstance, answer: &str) -> Vec<&'a Document> {
    inst.docs_for(DocLabel::Supporting, answer).collect()
}

/// Two gold answers, one backed by a single supporting document and the
/// other by `k`; misinformation and noise are dropped.
pub fn make_imbalance_subset(corpus: &[RamDocsInstance], k: usize) -> Result<SubsetOutcome, DatasetError> {
    check_level("k", k)?;
    let mut outcome = SubsetOutcome {
        instances: Vec::new(),
        skipped: Vec::new(),
    };
    for inst in corpus {
        if inst.gold_answers.len() < 2 {
            outcome.skipped.push(SkippedInstance {
                id: inst.id.clone(),
                reason: format!("{} gold answer(s), need 2", inst.gold_answers.len()),
            });
            continue;
        }
        let support: Vec<Vec<&Document>> = inst.gold_answers.iter().map(|a| supporting(inst, a)).collect();
        // The heavier answer is the first one with k documents; the lighter
        // is the first other answer with any support.
        let pair = (0..support.len()).find(|&b| support[b].len() >= k).and_then(|b| {
            (0..support.len())
                .find(|&a| a != b && !support[a].is_empty())
                .map(|a| (a, b))
        });
        let Some((a, b)) = pair else {
            outcome.skipped.push(SkippedInstance {
                id: inst.id.clone(),
                reason: format!("no pair of gold answers with 1 and {k} supporting documents"),
            });
            continue;
        };
        let keep: HashSet<&str> = support[a][..1]
            .iter()
            .chain(&support[b][..k])
            .map(|d| d.id.as_str())
            .collect();
        let (first, second) = (a.min(b), a.max(b));
        outcome.instances.push(RamDocsInstance {
            id: inst.id.clone(),
            question: inst.question.clone(),
            documents: inst
                .documents
                .iter()
                .filter(|d| keep.contains(d.id.as_str()))
                .cloned()
                .collect(),
            gold_answers: vec![inst.gold_answers[first].clone(), inst.gold_answers[second].clone()],
            forbidden_answers: Vec::new(),
            extra: Map::new(),
        });
    }
    finish(outcome, "imbalance")
}

/// Two gold answers with one supporting document each, plus `m`
/// misinformation documents that all promote the same alternative.
///
/// The alternative is taken from the instance's own forbidden answers when
/// possible, then from `distractors`. Existing misinformation documents for
/// it are reused first; the rest are entity swaps of the instance's
/// supporting documents.
pub fn make_misinfo_subset(
    corpus: &[RamDocsInstance],
    m: usize,
    distractors: &[String],
    chunk_word_budget: usize,
) -> Result<SubsetOutcome, DatasetError> {
    check_level("m", m)?;
    let mut outcome = SubsetOutcome {
        instances: Vec::new(),
        skipped: Vec::new(),
    };
    for inst in corpus {
        let backed: Vec<(&String, &Document)> = inst
            .gold_answers
            .iter()
            .filter_map(|a| supporting(inst, a).first().map(|d| (a, *d)))
            .take(2)
            .collect();
        if backed.len() < 2 {
            outcome.skipped.push(SkippedInstance {
                id: inst.id.clone(),
                reason: "fewer than 2 gold answers with supporting documents".into(),
            });
            continue;
        }
        let gold: HashSet<String> = inst.gold_answers.iter().map(|a| canonicalize_answer(a)).collect();

        let chosen = inst
            .forbidden_answers
            .iter()
            .chain(distractors)
            .filter(|alt| !gold.contains(&canonicalize_answer(alt)))
            .find_map(|alt| misinfo_for(inst, alt, m, chunk_word_budget).map(|docs| (alt, docs)));
        let Some((alt, misinfo)) = chosen else {
            outcome.skipped.push(SkippedInstance {
                id: inst.id.clone(),
                reason: format!("cannot produce {m} misinformation documents for one alternative"),
            });
            continue;
        };

        let mut documents: Vec<Document> = backed.iter().map(|(_, d)| (*d).clone()).collect();
        documents.extend(misinfo);
        outcome.instances.push(RamDocsInstance {
            id: inst.id.clone(),
            question: inst.question.clone(),
            documents,
            gold_answers: backed.iter().map(|(a, _)| (*a).clone()).collect(),
            forbidden_answers: vec![alt.clone()],
            extra: Map::new(),
        });
    }
    finish(outcome, "misinformation")
}

fn misinfo_for(inst: &RamDocsInstance, alt: &str, m: usize, budget: usize) -> Option<Vec<Document>> {
    let mut texts = HashSet::new();
    let mut out: Vec<Document> = inst
        .docs_for(DocLabel::Misinformation, alt)
        .filter(|d| texts.insert(d.text.clone()))
        .take(m)
        .cloned()
        .collect();
    for base in inst.documents.iter().filter(|d| d.label == DocLabel::Supporting) {
        if out.len() == m {
            break;
        }
        let Ok(mut doc) = inject_misinformation(base, alt) else {
            continue;
        };
        if word_count(&doc.text) > budget || !texts.insert(doc.text.clone()) {
            continue;
        }
        doc.id = format!("{}-m{}", inst.id, out.len());
        out.push(doc);
    }
    (out.len() == m).then_some(out)
}
