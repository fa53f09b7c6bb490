use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{chunk_document, Chunk, ChunkingConfig, Document, IngestError};
use crate::concurrency::map_bounded;
use crate::ids::{ChunkId, DocId};
use crate::providers::Embedder;
use crate::text::sha256_hex;

/// One row of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: DocId,
    pub source_path: String,
    pub sha256: String,
    pub title: String,
}

/// Documents and their chunks, with lookup by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    chunks: Vec<Chunk>,
    chunk_pos: HashMap<ChunkId, usize>,
    doc_pos: HashMap<DocId, usize>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

impl Corpus {
    pub fn new(documents: Vec<Document>, chunks: Vec<Chunk>) -> Result<Self, IngestError> {
        let mut corpus = Self::default();
        for doc in documents {
            if corpus
                .doc_pos
                .insert(doc.doc_id.clone(), corpus.documents.len())
                .is_some()
            {
                return Err(IngestError::Store(format!(
                    "duplicate document {}",
                    doc.doc_id
                )));
            }
            corpus.documents.push(doc);
        }
        for chunk in chunks {
            if !corpus.doc_pos.contains_key(&chunk.doc_id) {
                return Err(IngestError::Store(format!(
                    "chunk {} references unknown document",
                    chunk.chunk_id
                )));
            }
            if corpus
                .chunk_pos
                .insert(chunk.chunk_id.clone(), corpus.chunks.len())
                .is_some()
            {
                return Err(IngestError::Store(format!(
                    "duplicate chunk {}",
                    chunk.chunk_id
                )));
            }
            corpus.chunks.push(chunk);
        }
        Ok(corpus)
    }

    /// Chunks every document. Documents are processed in parallel; output
    /// keeps document order.
    pub fn build(
        documents: Vec<Document>,
        config: &ChunkingConfig,
        embedder: &dyn Embedder,
        max_in_flight: usize,
    ) -> Result<Self, IngestError> {
        let per_doc = map_bounded(&documents, max_in_flight, |_, doc| {
            chunk_document(doc, config, embedder)
        });
        let mut chunks = Vec::new();
        for result in per_doc {
            chunks.extend(result?);
        }
        Self::new(documents, chunks)
    }

    /// Adds or replaces a document together with its chunks.
    pub fn upsert(&mut self, doc: Document, chunks: Vec<Chunk>) -> Result<(), IngestError> {
        let mut documents: Vec<Document> = self
            .documents
            .drain(..)
            .filter(|d| d.doc_id != doc.doc_id)
            .collect();
        let mut all_chunks: Vec<Chunk> = self
            .chunks
            .drain(..)
            .filter(|c| c.doc_id != doc.doc_id)
            .collect();
        documents.push(doc);
        all_chunks.extend(chunks);
        *self = Self::new(documents, all_chunks)?;
        Ok(())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, id: &DocId) -> Option<&Document> {
        self.doc_pos.get(id).map(|&i| &self.documents[i])
    }

    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunk_pos.get(id).map(|&i| &self.chunks[i])
    }

    pub fn chunks_of<'a>(&'a self, doc: &'a DocId) -> impl Iterator<Item = &'a Chunk> + 'a {
        self.chunks.iter().filter(move |c| &c.doc_id == doc)
    }

    pub fn doc_ids(&self) -> BTreeSet<DocId> {
        self.documents.iter().map(|d| d.doc_id.clone()).collect()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.documents
            .iter()
            .map(|d| ManifestEntry {
                doc_id: d.doc_id.clone(),
                source_path: d.source_path.clone(),
                sha256: d.sha256.clone(),
                title: d.title.clone(),
            })
            .collect()
    }

    /// Pretty-printed manifest JSON, as written to disk.
    pub fn manifest_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn manifest_hash(&self) -> String {
        sha256_hex(self.manifest_json())
    }

    /// Writes `manifest.json`, `documents.jsonl` and `chunks.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), IngestError> {
        let io = |source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json()).map_err(io)?;
        write_jsonl(&dir.join(DOCUMENTS_FILE), &self.documents)?;
        write_jsonl(&dir.join(CHUNKS_FILE), &self.chunks)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IngestError> {
        let documents: Vec<Document> = read_jsonl(&dir.join(DOCUMENTS_FILE))?;
        let chunks: Vec<Chunk> = read_jsonl(&dir.join(CHUNKS_FILE))?;
        Self::new(documents, chunks)
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(DOCUMENTS_FILE).exists() && dir.join(CHUNKS_FILE).exists()
    }

    /// Chunk text and parent document, `None` for unknown ids.
    pub fn lookup(&self, id: &ChunkId) -> Option<(&DocId, &str)> {
        self.chunk(id).map(|c| (&c.doc_id, c.text.as_str()))
    }

    pub fn chunk_doc_map(&self) -> BTreeMap<ChunkId, DocId> {
        self.chunks
            .iter()
            .map(|c| (c.chunk_id.clone(), c.doc_id.clone()))
            .collect()
    }
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| IngestError::Store(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IngestError> {
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| IngestError::Store(format!("{}:{}: {e}", path.display(), n + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}
