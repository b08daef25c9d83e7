use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Map;

use crate::jsonl::JsonlError;
use crate::model::{DocLabel, Document, RamDocsInstance};

use super::DatasetError;

/// Mean and count histogram of one per-instance (or per-answer) quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    pub mean: f64,
    pub histogram: BTreeMap<usize, usize>,
}

impl DimensionStats {
    fn from_counts(counts: impl IntoIterator<Item = usize>) -> Self {
        let mut histogram = BTreeMap::new();
        let (mut sum, mut n) = (0usize, 0usize);
        for c in counts {
            *histogram.entry(c).or_insert(0) += 1;
            sum += c;
            n += 1;
        }
        let mean = if n == 0 { 0.0 } else { sum as f64 / n as f64 };
        Self { mean, histogram }
    }

    /// Number of observations.
    pub fn samples(&self) -> usize {
        self.histogram.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub total_docs: DimensionStats,
    pub supporting_docs: DimensionStats,
    pub misinformation_docs: DimensionStats,
    pub noise_docs: DimensionStats,
    pub gold_answers: DimensionStats,
    pub forbidden_answers: DimensionStats,
    /// Pooled over every gold answer of every instance.
    pub docs_per_gold_answer: DimensionStats,
    /// Pooled over every forbidden answer of every instance.
    pub docs_per_forbidden_answer: DimensionStats,
}

impl CorpusStats {
    /// Rows of (name, stats) in display order.
    pub fn dimensions(&self) -> [(&'static str, &DimensionStats); 8] {
        [
            ("total_docs", &self.total_docs),
            ("supporting_docs", &self.supporting_docs),
            ("misinformation_docs", &self.misinformation_docs),
            ("noise_docs", &self.noise_docs),
            ("gold_answers", &self.gold_answers),
            ("forbidden_answers", &self.forbidden_answers),
            ("docs_per_gold_answer", &self.docs_per_gold_answer),
            ("docs_per_forbidden_answer", &self.docs_per_forbidden_answer),
        ]
    }
}

pub fn compute_stats(corpus: &[RamDocsInstance]) -> Result<CorpusStats, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let per = |f: &dyn Fn(&RamDocsInstance) -> usize| DimensionStats::from_counts(corpus.iter().map(f));
    Ok(CorpusStats {
        instances: corpus.len(),
        total_docs: per(&|i| i.documents.len()),
        supporting_docs: per(&|i| i.count_label(DocLabel::Supporting)),
        misinformation_docs: per(&|i| i.count_label(DocLabel::Misinformation)),
        noise_docs: per(&|i| i.count_label(DocLabel::Noise)),
        gold_answers: per(&|i| i.gold_answers.len()),
        forbidden_answers: per(&|i| i.forbidden_answers.len()),
        docs_per_gold_answer: DimensionStats::from_counts(corpus.iter().flat_map(|i| {
            i.gold_answers
                .iter()
                .map(|a| i.docs_for(DocLabel::Supporting, a).count())
        })),
        docs_per_forbidden_answer: DimensionStats::from_counts(corpus.iter().flat_map(|i| {
            i.forbidden_answers
                .iter()
                .map(|a| i.docs_for(DocLabel::Misinformation, a).count())
        })),
    })
}

#[derive(Deserialize)]
struct ReleaseDoc {
    text: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    answer: Option<String>,
}

#[derive(Deserialize)]
struct ReleaseRecord {
    #[serde(default)]
    id: Option<String>,
    question: String,
    documents: Vec<ReleaseDoc>,
    gold_answers: Vec<String>,
    #[serde(default)]
    wrong_answers: Vec<String>,
}

/// Reads the published release layout (a JSON array or one record per
/// line, documents typed `correct` / `misinfo` / `noise`) into instances.
pub fn load_release(path: &Path) -> Result<Vec<RamDocsInstance>, JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = std::fs::read_to_string(path).map_err(io_err)?;
    let records: Vec<ReleaseRecord> = if raw.trim_start().starts_with('[') {
        serde_json::from_str(&raw).map_err(|source| JsonlError::Parse {
            path: path.to_path_buf(),
            line: source.line(),
            source,
        })?
    } else {
        let mut out = Vec::new();
        for (k, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(line).map_err(|source| JsonlError::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                source,
            })?);
        }
        out
    };
    Ok(records
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let id = r.id.unwrap_or_else(|| format!("ramdocs-{k}"));
            let documents = r
                .documents
                .into_iter()
                .enumerate()
                .map(|(j, d)| {
                    let doc_id = format!("{id}-d{j}");
                    let answer = d.answer.unwrap_or_default();
                    match d.kind.as_str() {
                        "correct" => Document::supporting(doc_id, d.text, answer),
                        "misinfo" => Document::misinformation(doc_id, d.text, answer),
                        _ => Document::noise(doc_id, d.text),
                    }
                })
                .collect();
            RamDocsInstance {
                id,
                question: r.question,
                documents,
                gold_answers: r.gold_answers,
                forbidden_answers: r.wrong_answers,
                extra: Map::new(),
            }
        })
        .collect())
}
