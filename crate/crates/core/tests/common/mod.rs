#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use madam_rag::backend::{Script, ScriptedBackend};
use madam_rag::dataset::{Disambiguation, SeedEntry};
use madam_rag::jsonl::load_corpus;
use madam_rag::model::{Document, Query, RamDocsInstance};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn prompt_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts").join(name)
}

pub fn jordan() -> RamDocsInstance {
    load_corpus(&fixture("jordan.jsonl")).unwrap().remove(0)
}

pub fn jordan_backend() -> ScriptedBackend {
    ScriptedBackend::new(Script::load(&fixture("jordan_script.json")).unwrap())
}

/// Textbook set arithmetic over a small alphabet, written without the
/// library's canonicalization: symbols are already canonical.
pub struct OracleMetrics {
    pub em_strict: u8,
    pub em_lenient: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn metric_oracle(pred: &BTreeSet<&str>, gold: &BTreeSet<&str>, forbidden: &BTreeSet<&str>) -> OracleMetrics {
    let mut hits = 0usize;
    for p in pred {
        if gold.iter().any(|g| g == p) {
            hits += 1;
        }
    }
    let precision = if pred.is_empty() { 0.0 } else { hits as f64 / pred.len() as f64 };
    let recall = hits as f64 / gold.len() as f64;
    let f1 = if hits == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let all_gold = gold.iter().all(|g| pred.contains(g));
    let no_forbidden = pred.iter().all(|p| !forbidden.contains(p));
    let no_extra = pred.iter().all(|p| gold.contains(p));
    OracleMetrics {
        em_strict: u8::from(all_gold && no_extra),
        em_lenient: u8::from(all_gold && no_forbidden),
        precision,
        recall,
        f1,
    }
}

/// Independent SplitMix64 + descending Fisher-Yates.
pub fn permutation_oracle(n: usize, seed: u64) -> Vec<usize> {
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        v.swap(i, j);
    }
    v
}

const FILLER: &[&str] = &[
    "river", "museum", "orchestra", "harbor", "village", "senate", "glacier", "novel", "league",
    "bridge", "painter", "railway", "festival", "temple", "journal", "valley", "island", "council",
];
const NOISE_WORDS: &[&str] = &[
    "weather", "recipe", "garden", "pottery", "tennis", "violin", "coffee", "sailing", "knitting",
    "marble", "ferns", "lantern",
];

fn filler(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| FILLER.choose(rng).unwrap().to_string()).collect()
}

/// Synthetic seed entries: each answer is a distinct four-digit year, and
/// each candidate document mentions its year 0-3 times among 10-260 words.
pub fn seed_entries(count: usize, seed: u64) -> Vec<SeedEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|e| {
            let n_dis = rng.random_range(1..=4);
            let mut years: Vec<u32> = Vec::new();
            while years.len() < n_dis {
                let y = rng.random_range(1000..3000);
                if !years.contains(&y) {
                    years.push(y);
                }
            }
            let disambiguations = years
                .iter()
                .map(|y| {
                    let n_docs = rng.random_range(0..=3);
                    let candidate_documents = (0..n_docs)
                        .map(|_| {
                            let len = rng.random_range(10..260);
                            let mut words = filler(&mut rng, len);
                            for _ in 0..rng.random_range(0..=3) {
                                let at = rng.random_range(0..=words.len());
                                words.insert(at, y.to_string());
                            }
                            words.join(" ")
                        })
                        .collect();
                    Disambiguation {
                        surface_answer: y.to_string(),
                        disambiguated_query: format!("entry {e} interpretation {y}"),
                        candidate_documents,
                    }
                })
                .collect();
            SeedEntry {
                ambiguous_query: Query::new(format!("entry-{e}"), format!("Which year belongs to entry {e}?")),
                disambiguations,
            }
        })
        .collect()
}

pub fn noise_pool(count: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = rng.random_range(5..100);
            let text: Vec<&str> = (0..n).map(|_| *NOISE_WORDS.choose(&mut rng).unwrap()).collect();
            Document::noise(format!("noise-{k}"), text.join(" "))
        })
        .collect()
}

pub fn distractors() -> Vec<String> {
    (0..20).map(|k| format!("{}", 3000 + k)).collect()
}
