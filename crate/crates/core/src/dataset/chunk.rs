use crate::model::{contains_answer, Document};

use super::DatasetError;

/// Greedy split into consecutive chunks of exactly `budget` words; only the
/// last chunk may be shorter. Words are re-joined with single spaces.
pub fn chunk_document(text: &str, budget: usize) -> Vec<String> {
    assert!(budget >= 1, "chunk budget must be at least one word");
    let words: Vec<&str> = text.split_whitespace().collect();
    words.chunks(budget).map(|c| c.join(" ")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportSelection {
    /// Chosen documents with the index of their source chunk.
    pub documents: Vec<(usize, Document)>,
    /// Matching chunks beyond the first `k`, in source order.
    pub spare: Vec<usize>,
    /// True when fewer than `k` chunks matched.
    pub shortfall: bool,
}

/// Picks the first `k` chunks (in source order) that contain `answer`.
pub fn select_supporting_chunks<S: AsRef<str>>(
    chunks: &[S],
    answer: &str,
    k: usize,
) -> Result<SupportSelection, DatasetError> {
    assert!(k >= 1, "must request at least one chunk");
    let matching: Vec<usize> = chunks
        .iter()
        .enumerate()
        .filter(|(_, c)| contains_answer(c.as_ref(), answer))
        .map(|(i, _)| i)
        .collect();
    if matching.is_empty() {
        return Err(DatasetError::NoSupportingChunk(answer.to_string()));
    }
    let take = k.min(matching.len());
    Ok(SupportSelection {
        documents: matching[..take]
            .iter()
            .map(|&i| (i, Document::supporting(format!("chunk-{i}"), chunks[i].as_ref(), answer)))
            .collect(),
        spare: matching[take..].to_vec(),
        shortfall: matching.len() < k,
    })
}
