use serde::{Deserialize, Serialize};

use super::{split_sentences, Document, IngestError, Sentence};
use crate::ids::{ChunkId, DocId};
use crate::providers::{embed_texts, Embedder};
use crate::text::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkingMethod {
    /// Greedy packing of whole sentences up to a whitespace-token cap.
    Token,
    /// One chunk per sentence.
    Sentence,
    /// Breakpoints where adjacent sentence-window embeddings diverge.
    #[default]
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    /// Neighbouring sentences on each side included in an embedding window.
    pub buffer_size: usize,
    /// Percentile of adjacent-window distances a breakpoint must exceed.
    pub breakpoint_percentile: f64,
    pub max_tokens_fixed: usize,
    pub method: ChunkingMethod,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            buffer_size: 1,
            breakpoint_percentile: 95.0,
            max_tokens_fixed: 200,
            method: ChunkingMethod::Semantic,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.breakpoint_percentile > 0.0 && self.breakpoint_percentile <= 100.0) {
            return Err(IngestError::InvalidConfig(format!(
                "breakpoint_percentile must be in (0, 100], got {}",
                self.breakpoint_percentile
            )));
        }
        if self.max_tokens_fixed == 0 {
            return Err(IngestError::InvalidConfig(
                "max_tokens_fixed must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A contiguous run of sentences of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    /// Inclusive sentence indices.
    pub sentence_range: (usize, usize),
    pub text: String,
    pub method: ChunkingMethod,
}

/// Linear-interpolation percentile (inclusive definition), `p` in `[0, 100]`.
pub fn percentile_linear(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

fn sentences_of(doc: &Document) -> Result<Vec<Sentence>, IngestError> {
    let sentences = split_sentences(&doc.body);
    if sentences.is_empty() {
        return Err(IngestError::EmptyDocument {
            path: doc.source_path.clone(),
        });
    }
    Ok(sentences)
}

/// Turns half-open runs of sentence indices into chunks.
fn assemble(
    doc: &Document,
    sentences: &[Sentence],
    runs: &[(usize, usize)],
    method: ChunkingMethod,
) -> Vec<Chunk> {
    runs.iter()
        .enumerate()
        .map(|(ordinal, &(first, end))| Chunk {
            chunk_id: ChunkId(format!("{}-c{:04}", doc.doc_id, ordinal)),
            doc_id: doc.doc_id.clone(),
            sentence_range: (first, end - 1),
            text: sentences[first..end]
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            method,
        })
        .collect()
}

/// Semantic chunking: each sentence is embedded together with `buffer_size`
/// neighbours on each side; a breakpoint follows sentence `i` when the cosine
/// distance between windows `i` and `i + 1` strictly exceeds the configured
/// percentile of all adjacent distances.
pub fn chunk_semantic(
    doc: &Document,
    config: &ChunkingConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<Chunk>, IngestError> {
    config.validate()?;
    let sentences = sentences_of(doc)?;
    let n = sentences.len();
    if n == 1 {
        return Ok(assemble(
            doc,
            &sentences,
            &[(0, 1)],
            ChunkingMethod::Semantic,
        ));
    }
    let windows: Vec<String> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(config.buffer_size);
            let hi = (i + config.buffer_size).min(n - 1);
            sentences[lo..=hi]
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let vectors = embed_texts(embedder, &windows)?;
    let distances: Vec<f64> = vectors
        .windows(2)
        .map(|w| 1.0 - cosine(&w[0].values, &w[1].values))
        .collect();
    let threshold = percentile_linear(&distances, config.breakpoint_percentile);

    let mut runs = Vec::new();
    let mut first = 0;
    for (i, &d) in distances.iter().enumerate() {
        if d > threshold {
            runs.push((first, i + 1));
            first = i + 1;
        }
    }
    runs.push((first, n));
    Ok(assemble(doc, &sentences, &runs, ChunkingMethod::Semantic))
}

/// Greedy packing of whole sentences into chunks of at most
/// `max_tokens_fixed` whitespace tokens. An oversize sentence stands alone.
pub fn chunk_fixed(doc: &Document, config: &ChunkingConfig) -> Result<Vec<Chunk>, IngestError> {
    config.validate()?;
    let sentences = sentences_of(doc)?;
    let cap = config.max_tokens_fixed;
    let mut runs = Vec::new();
    let (mut first, mut tokens) = (0, 0);
    for (i, s) in sentences.iter().enumerate() {
        let count = s.text.split_whitespace().count();
        if i > first && tokens + count > cap {
            runs.push((first, i));
            first = i;
            tokens = 0;
        }
        tokens += count;
    }
    runs.push((first, sentences.len()));
    Ok(assemble(doc, &sentences, &runs, ChunkingMethod::Token))
}

pub fn chunk_sentences(doc: &Document) -> Result<Vec<Chunk>, IngestError> {
    let sentences = sentences_of(doc)?;
    let runs: Vec<_> = (0..sentences.len()).map(|i| (i, i + 1)).collect();
    Ok(assemble(doc, &sentences, &runs, ChunkingMethod::Sentence))
}

/// Dispatches on `config.method`.
pub fn chunk_document(
    doc: &Document,
    config: &ChunkingConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<Chunk>, IngestError> {
    match config.method {
        ChunkingMethod::Semantic => chunk_semantic(doc, config, embedder),
        ChunkingMethod::Token => chunk_fixed(doc, config),
        ChunkingMethod::Sentence => {
            config.validate()?;
            chunk_sentences(doc)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::providers::mock::{FnEmbedder, MockEmbedder};

    fn doc(body: &str) -> Document {
        Document::from_text("t.txt", body, BTreeMap::new()).unwrap()
    }

    /// Sentences mentioning "alpha" embed to e1, everything else to e2.
    fn two_topic_embedder() -> FnEmbedder {
        FnEmbedder::new(2, |text| {
            if text.contains("alpha") {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        })
    }

    #[test]
    fn percentile_matches_hand_values() {
        assert!((percentile_linear(&[0.0, 0.0, 1.0, 0.0, 0.0], 95.0) - 0.8).abs() < 1e-12);
        assert_eq!(percentile_linear(&[3.0, 1.0, 2.0], 50.0), 2.0);
        assert_eq!(percentile_linear(&[3.0, 1.0, 2.0], 100.0), 3.0);
        assert_eq!(percentile_linear(&[5.0], 95.0), 5.0);
    }

    #[test]
    fn single_sentence_is_one_chunk() {
        let d = doc("Only one sentence here.");
        let chunks =
            chunk_semantic(&d, &ChunkingConfig::default(), &MockEmbedder::new(64, 7)).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "Only one sentence here.");
        assert_eq!(chunks[0].sentence_range, (0, 0));
    }

    #[test]
    fn orthogonal_topics_split_once() {
        let d = doc("One alpha. Two alpha. Three alpha. Four beta. Five beta. Six beta.");
        let config = ChunkingConfig {
            buffer_size: 0,
            ..Default::default()
        };
        let chunks = chunk_semantic(&d, &config, &two_topic_embedder()).unwrap();
        let ranges: Vec<_> = chunks.iter().map(|c| c.sentence_range).collect();
        assert_eq!(ranges, [(0, 2), (3, 5)]);
        assert_eq!(chunks[1].text, "Four beta. Five beta. Six beta.");
    }

    #[test]
    fn identical_embeddings_never_break() {
        let d = doc("A one. B two. C three. D four.");
        let same = FnEmbedder::new(3, |_| vec![0.2, 0.3, 0.4]);
        let chunks = chunk_semantic(&d, &ChunkingConfig::default(), &same).unwrap();
        assert_eq!(chunks.len(), 1);
    }

    #[test]
    fn percentile_100_yields_one_chunk() {
        let d = doc("One alpha. Two alpha. Four beta. Five alpha. Six beta.");
        let config = ChunkingConfig {
            buffer_size: 0,
            breakpoint_percentile: 100.0,
            ..Default::default()
        };
        assert_eq!(
            chunk_semantic(&d, &config, &two_topic_embedder())
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn fixed_packing_is_exact() {
        let body = (0..10)
            .map(|i| format!("Word{i} a b c d."))
            .collect::<Vec<_>>()
            .join(" ");
        let d = doc(&body);
        let config = ChunkingConfig {
            max_tokens_fixed: 25,
            method: ChunkingMethod::Token,
            ..Default::default()
        };
        let chunks = chunk_fixed(&d, &config).unwrap();
        assert_eq!(
            chunks.iter().map(|c| c.sentence_range).collect::<Vec<_>>(),
            [(0, 4), (5, 9)]
        );
    }

    #[test]
    fn fixed_cap_one_gives_sentence_chunks() {
        let d = doc("Two words. Three more words. Four words right here.");
        let config = ChunkingConfig {
            max_tokens_fixed: 1,
            ..Default::default()
        };
        assert_eq!(chunk_fixed(&d, &config).unwrap().len(), 3);
    }

    #[test]
    fn bad_configs_rejected() {
        let d = doc("A b. C d.");
        let zero_cap = ChunkingConfig {
            max_tokens_fixed: 0,
            ..Default::default()
        };
        assert!(matches!(
            chunk_fixed(&d, &zero_cap),
            Err(IngestError::InvalidConfig(_))
        ));
        let bad_pct = ChunkingConfig {
            breakpoint_percentile: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            chunk_semantic(&d, &bad_pct, &MockEmbedder::new(8, 1)),
            Err(IngestError::InvalidConfig(_))
        ));
    }

    #[test]
    fn chunk_ids_sort_in_document_order() {
        let d = doc(&(0..12)
            .map(|i| format!("S{i}."))
            .collect::<Vec<_>>()
            .join(" "));
        let chunks = chunk_sentences(&d).unwrap();
        let mut ids: Vec<_> = chunks.iter().map(|c| c.chunk_id.clone()).collect();
        let original = ids.clone();
        ids.sort();
        assert_eq!(ids, original);
    }
}
