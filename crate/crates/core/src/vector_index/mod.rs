//! Cosine top-k search over chunk embeddings.
//!
//! The exact scan is the reference backend. Past `ann_threshold` entries an
//! HNSW graph is built as well and unfiltered searches go through it;
//! filtered searches always scan the filtered candidates exactly.

mod hnsw;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use hnsw::Hnsw;

use crate::ids::{ChunkId, DocId};
use crate::ingest::Chunk;
use crate::providers::{embed_one, embed_texts, Embedder, ProviderError};
use crate::text::cosine;

pub const META_FILE: &str = "vector.meta.json";
pub const VECTORS_FILE: &str = "vector.f32";
pub const IDS_FILE: &str = "vector.ids.jsonl";

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_ANN_THRESHOLD: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(ChunkId),
    #[error("vector dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot build an index from zero chunks")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt index files: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Seed for level assignment, so rebuilt graphs are identical.
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexOptions {
    /// An ANN graph is built when the entry count exceeds this.
    pub ann_threshold: usize,
    pub ann_params: AnnParams,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            ann_threshold: DEFAULT_ANN_THRESHOLD,
            ann_params: AnnParams::default(),
        }
    }
}

/// Per-entry metadata, one row of `vector.ids.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorHit {
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexMeta {
    dim: usize,
    metric: Metric,
    ann_params: Option<AnnParams>,
    count: usize,
    model_id: String,
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    entries: Vec<EntryMeta>,
    data: Vec<f32>,
    dim: usize,
    model_id: String,
    ann: Option<Hnsw>,
}

/// Descending score, then ascending chunk id.
pub(crate) fn hit_order(a: &VectorHit, b: &VectorHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

impl VectorIndex {
    /// Embeds every chunk and indexes the vectors.
    pub fn build(
        chunks: &[Chunk],
        embedder: &dyn Embedder,
        options: &IndexOptions,
    ) -> Result<Self, IndexError> {
        if chunks.is_empty() {
            return Err(IndexError::Empty);
        }
        check_unique(chunks.iter().map(|c| &c.chunk_id))?;
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = embed_texts(embedder, &texts)?;
        let rows = chunks
            .iter()
            .zip(vectors)
            .map(|(c, v)| {
                (
                    EntryMeta {
                        chunk_id: c.chunk_id.clone(),
                        doc_id: c.doc_id.clone(),
                        text: c.text.clone(),
                    },
                    v.values,
                )
            })
            .collect();
        Self::from_vectors(rows, embedder.model_id(), options)
    }

    /// Indexes precomputed vectors.
    pub fn from_vectors(
        rows: Vec<(EntryMeta, Vec<f32>)>,
        model_id: &str,
        options: &IndexOptions,
    ) -> Result<Self, IndexError> {
        let Some(dim) = rows.first().map(|(_, v)| v.len()) else {
            return Err(IndexError::Empty);
        };
        if dim == 0 {
            return Err(IndexError::InvalidArgument(
                "zero-dimensional vectors".into(),
            ));
        }
        check_unique(rows.iter().map(|(m, _)| &m.chunk_id))?;
        let mut entries = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (meta, v) in rows {
            if v.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            entries.push(meta);
            data.extend_from_slice(&v);
        }
        let mut index = Self {
            entries,
            data,
            dim,
            model_id: model_id.to_string(),
            ann: None,
        };
        if index.len() > options.ann_threshold {
            index.ann = Some(Hnsw::build(&index.data, dim, options.ann_params));
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        Metric::Cosine
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn ann_params(&self) -> Option<AnnParams> {
        self.ann.as_ref().map(Hnsw::params)
    }

    pub fn entries(&self) -> &[EntryMeta] {
        &self.entries
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn hit(&self, i: usize, score: f64) -> VectorHit {
        let e = &self.entries[i];
        VectorHit {
            chunk_id: e.chunk_id.clone(),
            doc_id: e.doc_id.clone(),
            score,
            text: e.text.clone(),
        }
    }

    fn check_query(&self, query: &[f32], top_k: usize) -> Result<(), IndexError> {
        if top_k == 0 {
            return Err(IndexError::InvalidArgument(
                "top_k must be at least 1".into(),
            ));
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    /// Brute-force scan; the reference every other path is checked against.
    pub fn search_exact(
        &self,
        query: &[f32],
        top_k: usize,
        doc_filter: Option<&BTreeSet<DocId>>,
    ) -> Result<Vec<VectorHit>, IndexError> {
        self.check_query(query, top_k)?;
        let mut hits: Vec<VectorHit> = (0..self.len())
            .filter(|&i| doc_filter.is_none_or(|f| f.contains(&self.entries[i].doc_id)))
            .map(|i| self.hit(i, cosine(query, self.vector(i))))
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(top_k);
        Ok(hits)
    }

    /// Top-k search. Uses the ANN graph when one was built and no filter is
    /// given; scores are always exact cosine values.
    pub fn search(
        &self,
        query: &[f32],
        top_k: usize,
        doc_filter: Option<&BTreeSet<DocId>>,
    ) -> Result<Vec<VectorHit>, IndexError> {
        match (&self.ann, doc_filter) {
            (Some(ann), None) => {
                self.check_query(query, top_k)?;
                let mut hits: Vec<VectorHit> = ann
                    .search(query, top_k)
                    .into_iter()
                    .map(|i| self.hit(i, cosine(query, self.vector(i))))
                    .collect();
                hits.sort_by(hit_order);
                hits.truncate(top_k);
                Ok(hits)
            }
            _ => self.search_exact(query, top_k, doc_filter),
        }
    }

    /// Embeds `query` and searches.
    pub fn retrieve(
        &self,
        query: &str,
        top_k: usize,
        doc_filter: Option<&BTreeSet<DocId>>,
        embedder: &dyn Embedder,
    ) -> Result<Vec<VectorHit>, IndexError> {
        if query.trim().is_empty() {
            return Err(IndexError::InvalidArgument("query is empty".into()));
        }
        let q = embed_one(embedder, query)?;
        self.search(&q.values, top_k, doc_filter)
    }

    /// Writes the three `vector.*` files into `dir`. The ANN graph is not
    /// stored; [`VectorIndex::load`] rebuilds it from the saved parameters.
    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        let io = |path: PathBuf| move |source| IndexError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let meta = IndexMeta {
            dim: self.dim,
            metric: Metric::Cosine,
            ann_params: self.ann_params(),
            count: self.len(),
            model_id: self.model_id.clone(),
        };
        let meta_path = dir.join(META_FILE);
        let json =
            serde_json::to_string_pretty(&meta).map_err(|e| IndexError::Corrupt(e.to_string()))?;
        fs::write(&meta_path, json + "\n").map_err(io(meta_path.clone()))?;

        let vec_path = dir.join(VECTORS_FILE);
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        fs::write(&vec_path, bytes).map_err(io(vec_path.clone()))?;

        let ids_path = dir.join(IDS_FILE);
        let file = fs::File::create(&ids_path).map_err(io(ids_path.clone()))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e).map_err(|e| IndexError::Corrupt(e.to_string()))?;
            w.write_all(b"\n").map_err(io(ids_path.clone()))?;
        }
        w.flush().map_err(io(ids_path))
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(META_FILE).exists()
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| IndexError::Io { path, source })
        };
        let meta: IndexMeta = serde_json::from_slice(&read(META_FILE)?)
            .map_err(|e| IndexError::Corrupt(format!("{META_FILE}: {e}")))?;
        let bytes = read(VECTORS_FILE)?;
        if bytes.len() != meta.count * meta.dim * 4 {
            return Err(IndexError::Corrupt(format!(
                "{VECTORS_FILE} holds {} bytes, expected {}",
                bytes.len(),
                meta.count * meta.dim * 4
            )));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let ids_text =
            String::from_utf8(read(IDS_FILE)?).map_err(|e| IndexError::Corrupt(e.to_string()))?;
        let entries = ids_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str::<EntryMeta>(l)
                    .map_err(|e| IndexError::Corrupt(format!("{IDS_FILE}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if entries.len() != meta.count {
            return Err(IndexError::Corrupt(format!(
                "{IDS_FILE} has {} rows, expected {}",
                entries.len(),
                meta.count
            )));
        }
        check_unique(entries.iter().map(|e| &e.chunk_id))?;
        let ann = meta.ann_params.map(|p| Hnsw::build(&data, meta.dim, p));
        Ok(Self {
            entries,
            data,
            dim: meta.dim,
            model_id: meta.model_id,
            ann,
        })
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a ChunkId>) -> Result<(), IndexError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(IndexError::DuplicateChunk(id.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ChunkingMethod;
    use crate::providers::mock::{mock_embed, MockEmbedder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chunk(i: usize, doc: &str) -> Chunk {
        Chunk {
            chunk_id: ChunkId(format!("{doc}-c{i:04}")),
            doc_id: DocId::from(doc),
            sentence_range: (i, i),
            text: format!("chunk number {i} of {doc}"),
            method: ChunkingMethod::Sentence,
        }
    }

    fn chunks(n: usize) -> Vec<Chunk> {
        (0..n)
            .map(|i| chunk(i, if i % 3 == 0 { "doc-a" } else { "doc-b" }))
            .collect()
    }

    fn oracle(
        rows: &[(ChunkId, DocId, Vec<f32>)],
        q: &[f32],
        k: usize,
        filter: Option<&BTreeSet<DocId>>,
    ) -> Vec<ChunkId> {
        let mut scored: Vec<(f64, &ChunkId)> = rows
            .iter()
            .filter(|(_, d, _)| filter.is_none_or(|f| f.contains(d)))
            .map(|(c, _, v)| {
                let dot: f64 = q
                    .iter()
                    .zip(v)
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum();
                let na: f64 = q.iter().map(|a| f64::from(*a).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = v.iter().map(|b| f64::from(*b).powi(2)).sum::<f64>().sqrt();
                (dot / (na * nb), c)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        scored.into_iter().take(k).map(|(_, c)| c.clone()).collect()
    }

    #[test]
    fn build_has_one_entry_per_chunk() {
        let e = MockEmbedder::new(16, 1);
        let idx = VectorIndex::build(&chunks(3), &e, &IndexOptions::default()).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.dim(), 16);
        assert!(idx.ann_params().is_none());
    }

    #[test]
    fn duplicate_chunk_rejected() {
        let mut cs = chunks(2);
        cs[1].chunk_id = cs[0].chunk_id.clone();
        let err = VectorIndex::build(&cs, &MockEmbedder::new(8, 1), &IndexOptions::default())
            .unwrap_err();
        assert!(matches!(err, IndexError::DuplicateChunk(_)));
    }

    #[test]
    fn self_query_scores_one() {
        let e = MockEmbedder::new(32, 3);
        let cs = chunks(10);
        let idx = VectorIndex::build(&cs, &e, &IndexOptions::default()).unwrap();
        let hits = idx.retrieve(&cs[4].text, 1, None, &e).unwrap();
        assert_eq!(hits[0].chunk_id, cs[4].chunk_id);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn large_top_k_returns_everything_sorted() {
        let e = MockEmbedder::new(16, 3);
        let idx = VectorIndex::build(&chunks(7), &e, &IndexOptions::default()).unwrap();
        let hits = idx.retrieve("anything", 50, None, &e).unwrap();
        assert_eq!(hits.len(), 7);
        assert!(hits
            .windows(2)
            .all(|w| hit_order(&w[0], &w[1]) != Ordering::Greater));
    }

    #[test]
    fn ties_break_by_chunk_id() {
        let rows = ["c", "a", "b"]
            .iter()
            .map(|id| {
                (
                    EntryMeta {
                        chunk_id: ChunkId::from(*id),
                        doc_id: DocId::from("d"),
                        text: String::new(),
                    },
                    vec![1.0, 0.0],
                )
            })
            .collect();
        let idx = VectorIndex::from_vectors(rows, "t", &IndexOptions::default()).unwrap();
        let ids: Vec<String> = idx
            .search(&[1.0, 0.0], 3, None)
            .unwrap()
            .into_iter()
            .map(|h| h.chunk_id.0)
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn query_dim_mismatch() {
        let idx = VectorIndex::build(
            &chunks(2),
            &MockEmbedder::new(8, 1),
            &IndexOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            idx.search(&[1.0; 4], 1, None),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exact_matches_oracle_with_and_without_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<(ChunkId, DocId, Vec<f32>)> = (0..300)
            .map(|i| {
                let v: Vec<f32> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
                (ChunkId(format!("c{i:04}")), DocId(format!("d{}", i % 5)), v)
            })
            .collect();
        let idx = VectorIndex::from_vectors(
            rows.iter()
                .map(|(c, d, v)| {
                    (
                        EntryMeta {
                            chunk_id: c.clone(),
                            doc_id: d.clone(),
                            text: String::new(),
                        },
                        v.clone(),
                    )
                })
                .collect(),
            "rand",
            &IndexOptions::default(),
        )
        .unwrap();
        let filter: BTreeSet<DocId> = [DocId::from("d1"), DocId::from("d3")].into();
        for _ in 0..20 {
            let q: Vec<f32> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got: Vec<ChunkId> = idx
                .search(&q, 5, None)
                .unwrap()
                .into_iter()
                .map(|h| h.chunk_id)
                .collect();
            assert_eq!(got, oracle(&rows, &q, 5, None));
            let got: Vec<ChunkId> = idx
                .search(&q, 5, Some(&filter))
                .unwrap()
                .into_iter()
                .map(|h| h.chunk_id)
                .collect();
            assert_eq!(got, oracle(&rows, &q, 5, Some(&filter)));
        }
    }

    #[test]
    fn persistence_round_trip() {
        let e = MockEmbedder::new(24, 5);
        let opts = IndexOptions {
            ann_threshold: 50,
            ..Default::default()
        };
        let idx = VectorIndex::build(&chunks(100), &e, &opts).unwrap();
        assert!(idx.ann_params().is_some());
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        let loaded = VectorIndex::load(dir.path()).unwrap();
        for i in 0..20 {
            let q = mock_embed(&format!("query {i}"), 24, 99).values;
            assert_eq!(
                idx.search(&q, 5, None).unwrap(),
                loaded.search(&q, 5, None).unwrap()
            );
            assert_eq!(
                idx.search_exact(&q, 5, None).unwrap(),
                loaded.search_exact(&q, 5, None).unwrap()
            );
        }
    }

    #[test]
    fn truncated_vector_file_is_corrupt() {
        let idx = VectorIndex::build(
            &chunks(3),
            &MockEmbedder::new(8, 1),
            &IndexOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        idx.save(dir.path()).unwrap();
        fs::write(dir.path().join(VECTORS_FILE), [0u8; 7]).unwrap();
        assert!(matches!(
            VectorIndex::load(dir.path()),
            Err(IndexError::Corrupt(_))
        ));
    }
}
