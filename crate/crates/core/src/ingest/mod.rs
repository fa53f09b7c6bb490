//! Document loading and chunking.
//!
//! Documents are pre-extracted UTF-8 text files. Bodies are normalized (NFC,
//! control characters stripped, whitespace collapsed) so that sentences joined
//! by single spaces reproduce the body exactly.

mod chunking;
mod corpus;
mod sentences;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use chunking::{
    chunk_document, chunk_fixed, chunk_semantic, chunk_sentences, percentile_linear, Chunk,
    ChunkingConfig, ChunkingMethod,
};
pub use corpus::{Corpus, ManifestEntry};
pub use sentences::{split_sentences, Sentence, ABBREVIATIONS};

use crate::ids::DocId;
use crate::providers::ProviderError;
use crate::text::{normalize_text, sha256_hex};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8 text")]
    NotUtf8 { path: PathBuf },
    #[error("document {path} is empty after normalization")]
    EmptyDocument { path: String },
    #[error("invalid metadata sidecar {path}: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error("invalid chunking configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus store: {0}")]
    Store(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// An ingested source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub title: String,
    pub body: String,
    /// Path label with `/` separators; relative to the corpus root when loaded
    /// through [`load_corpus`].
    pub source_path: String,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    /// Builds a document from raw text. `source_path` participates in the id,
    /// so the same text under two paths yields two documents.
    pub fn from_text(
        source_path: &str,
        raw: &str,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, IngestError> {
        let body = normalize_text(raw);
        if body.is_empty() {
            return Err(IngestError::EmptyDocument {
                path: source_path.to_string(),
            });
        }
        let sha256 = sha256_hex(raw.as_bytes());
        let doc_id = derive_doc_id(source_path, &sha256);
        let title = metadata
            .get("title")
            .cloned()
            .unwrap_or_else(|| default_title(source_path));
        Ok(Self {
            doc_id,
            title,
            body,
            source_path: source_path.to_string(),
            sha256,
            metadata,
        })
    }
}

fn derive_doc_id(source_path: &str, content_sha256: &str) -> DocId {
    let digest = sha256_hex(format!("{source_path}\n{content_sha256}"));
    DocId(format!("doc-{}", &digest[..12]))
}

fn default_title(source_path: &str) -> String {
    let name = source_path.rsplit('/').next().unwrap_or(source_path);
    name.strip_suffix(".txt").unwrap_or(name).to_string()
}

fn path_label(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
        .replace("//", "/")
}

/// Loads one text file, reading an optional `<stem>.meta.json` sidecar.
pub fn load_document(path: &Path) -> Result<Document, IngestError> {
    load_with_label(path, &path_label(path))
}

fn load_with_label(path: &Path, label: &str) -> Result<Document, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw = String::from_utf8(bytes).map_err(|_| IngestError::NotUtf8 {
        path: path.to_path_buf(),
    })?;
    let metadata = read_sidecar(path)?;
    Document::from_text(label, &raw, metadata)
}

fn sidecar_path(path: &Path) -> Option<PathBuf> {
    let stem = path.file_stem()?.to_string_lossy().into_owned();
    Some(path.with_file_name(format!("{stem}.meta.json")))
}

/// Sidecar fields: `title` (string), `authors` (array of strings), `year`
/// (number or string), `tags` (array of strings). Other scalar fields are
/// copied through as text.
fn read_sidecar(path: &Path) -> Result<BTreeMap<String, String>, IngestError> {
    let mut out = BTreeMap::new();
    let Some(meta_path) = sidecar_path(path) else {
        return Ok(out);
    };
    if !meta_path.exists() {
        return Ok(out);
    }
    let text = fs::read_to_string(&meta_path).map_err(|source| IngestError::Io {
        path: meta_path.clone(),
        source,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| IngestError::Metadata {
            path: meta_path.clone(),
            message: e.to_string(),
        })?;
    let serde_json::Value::Object(map) = value else {
        return Err(IngestError::Metadata {
            path: meta_path,
            message: "expected a JSON object".into(),
        });
    };
    for (key, value) in map {
        let rendered = match (key.as_str(), value) {
            (_, serde_json::Value::String(s)) => s,
            (_, serde_json::Value::Number(n)) => n.to_string(),
            (_, serde_json::Value::Bool(b)) => b.to_string(),
            ("authors", serde_json::Value::Array(items)) => join_strings(&items, "; "),
            (_, serde_json::Value::Array(items)) => join_strings(&items, ", "),
            _ => continue,
        };
        out.insert(key, rendered);
    }
    Ok(out)
}

fn join_strings(items: &[serde_json::Value], sep: &str) -> String {
    items
        .iter()
        .filter_map(|v| match v {
            serde_json::Value::String(s) => Some(s.clone()),
            serde_json::Value::Number(n) => Some(n.to_string()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join(sep)
}

/// Loads every `*.txt` file directly under `dir`, in file-name order.
/// Source paths are recorded relative to `dir`.
pub fn load_corpus(dir: &Path) -> Result<Vec<Document>, IngestError> {
    let entries = fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    files.sort();
    files
        .iter()
        .map(|path| {
            let label = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            load_with_label(path, &label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_collapsed_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        fs::write(&path, "Hello  world.\n").unwrap();
        let doc = load_document(&path).unwrap();
        assert_eq!(doc.body, "Hello world.");
        assert_eq!(doc.title, "a");
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, " \n\t").unwrap();
        assert!(matches!(
            load_document(&path),
            Err(IngestError::EmptyDocument { .. })
        ));
    }

    #[test]
    fn sidecar_metadata() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("p.txt"), "Body text.").unwrap();
        fs::write(
            dir.path().join("p.meta.json"),
            r#"{"title": "A Study", "authors": ["Lee", "Ng"], "year": 2021, "tags": ["soil", "runoff"]}"#,
        )
        .unwrap();
        let doc = load_document(&dir.path().join("p.txt")).unwrap();
        assert_eq!(doc.title, "A Study");
        assert_eq!(doc.metadata["authors"], "Lee; Ng");
        assert_eq!(doc.metadata["year"], "2021");
        assert_eq!(doc.metadata["tags"], "soil, runoff");
    }

    #[test]
    fn bad_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("p.txt"), "Body text.").unwrap();
        fs::write(dir.path().join("p.meta.json"), "[1, 2]").unwrap();
        assert!(matches!(
            load_document(&dir.path().join("p.txt")),
            Err(IngestError::Metadata { .. })
        ));
    }

    #[test]
    fn corpus_ids_depend_on_path_and_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("one.txt"), "Same text.").unwrap();
        fs::write(dir.path().join("two.txt"), "Same text.").unwrap();
        fs::write(dir.path().join("three.txt"), "Other text.").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 3);
        let mut ids: Vec<_> = docs.iter().map(|d| d.doc_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 3);
        assert_eq!(docs[0].source_path, "one.txt");
    }
}
