use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl::{read_jsonl, JsonlError};
use crate::model::{Document, Query};

use super::chunk::chunk_document;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disambiguation {
    #[serde(rename = "answer")]
    pub surface_answer: String,
    #[serde(rename = "query")]
    pub disambiguated_query: String,
    /// Raw retrieved texts; chunked during construction.
    #[serde(rename = "documents", default)]
    pub candidate_documents: Vec<String>,
}

/// An ambiguous question and the interpretations that answer it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedEntry {
    pub ambiguous_query: Query,
    pub disambiguations: Vec<Disambiguation>,
}

#[derive(Deserialize)]
struct SeedRecord {
    #[serde(default)]
    id: Option<String>,
    ambiguous_query: String,
    disambiguations: Vec<Disambiguation>,
}

/// Loads a seed-entry file. Entries without an `id` are numbered by line.
pub fn load_seed_entries(path: &Path) -> Result<Vec<SeedEntry>, JsonlError> {
    let records: Vec<SeedRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .enumerate()
        .map(|(k, r)| SeedEntry {
            ambiguous_query: Query::new(r.id.unwrap_or_else(|| format!("seed-{k}")), r.ambiguous_query),
            disambiguations: r.disambiguations,
        })
        .collect())
}

#[derive(Deserialize)]
struct NoiseRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    source: Option<String>,
}

/// Loads off-topic texts (`{id?, text, source?}` per line) and chunks them
/// into noise documents of at most `budget` words.
pub fn load_noise_pool(path: &Path, budget: usize) -> Result<Vec<Document>, JsonlError> {
    let records: Vec<NoiseRecord> = read_jsonl(path)?;
    let mut pool = Vec::new();
    for (k, r) in records.into_iter().enumerate() {
        let base = r.id.unwrap_or_else(|| format!("noise-{k}"));
        for (c, chunk) in chunk_document(&r.text, budget).into_iter().enumerate() {
            let mut doc = Document::noise(format!("{base}-{c}"), chunk);
            doc.source = r.source.clone();
            pool.push(doc);
        }
    }
    Ok(pool)
}

/// Supplies retrieved texts for a disambiguated query.
pub trait DocumentSource {
    fn documents(&self, disambiguated_query: &str) -> std::io::Result<Vec<String>>;

    /// Fills every disambiguation that has no inline documents.
    fn fill(&self, entries: &mut [SeedEntry]) -> std::io::Result<()> {
        for entry in entries.iter_mut() {
            for d in entry.disambiguations.iter_mut() {
                if d.candidate_documents.is_empty() {
                    d.candidate_documents = self.documents(&d.disambiguated_query)?;
                }
            }
        }
        Ok(())
    }
}

/// Pre-fetched texts on disk: `<root>/<key>/*.txt`, where `key` is the
/// query lowercased with every run of non-alphanumerics replaced by `-`.
#[derive(Debug, Clone)]
pub struct LocalCorpusSource {
    root: PathBuf,
}

impl LocalCorpusSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn key(query: &str) -> String {
        let mut key = String::new();
        for c in query.to_lowercase().chars() {
            if c.is_alphanumeric() {
                key.push(c);
            } else if !key.ends_with('-') && !key.is_empty() {
                key.push('-');
            }
        }
        key.trim_end_matches('-').to_string()
    }
}

impl DocumentSource for LocalCorpusSource {
    fn documents(&self, disambiguated_query: &str) -> std::io::Result<Vec<String>> {
        let dir = self.root.join(Self::key(disambiguated_query));
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        paths.iter().map(std::fs::read_to_string).collect()
    }
}
