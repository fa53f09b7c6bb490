//! Request and response bodies of the HTTP API.

use std::collections::BTreeMap;
use std::path::PathBuf;

use litrag_core::engine::Trace;
use litrag_core::{ChunkId, ContextItem, DocId, RetrievalMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_loaded: bool,
    pub graph_loaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadRequest {
    pub filename: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub doc_id: DocId,
    pub title: String,
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: DocId,
    pub title: String,
    pub source_path: String,
    pub chunks: usize,
    /// Whether the document is part of the last completed build.
    pub indexed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkView {
    pub doc_id: DocId,
    pub chunk_id: ChunkId,
    pub title: String,
    pub sentence_range: (usize, usize),
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRequest {
    /// Any of `"vector"` and `"graph"`; both when omitted.
    #[serde(default = "default_build_modes")]
    pub modes: Vec<String>,
}

fn default_build_modes() -> Vec<String> {
    vec!["vector".into(), "graph".into()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default = "default_mode")]
    pub mode: RetrievalMode,
    /// One document id selects the single-paper scenario.
    #[serde(default)]
    pub doc_filter: Option<Vec<DocId>>,
}

fn default_mode() -> RetrievalMode {
    RetrievalMode::Hybrid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub mode: RetrievalMode,
    pub doc_filter: Option<Vec<DocId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRequest {
    pub query: String,
    /// Overrides the session mode for this message only.
    #[serde(default)]
    pub mode: Option<RetrievalMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationView {
    pub number: usize,
    pub doc_id: DocId,
    pub chunk_id: ChunkId,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageResponse {
    pub session_id: String,
    pub turn: usize,
    pub mode: RetrievalMode,
    pub answer: String,
    pub citations: Vec<CitationView>,
    pub contexts: Vec<ContextItem>,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub testset_path: PathBuf,
    #[serde(default = "all_modes")]
    pub modes: Vec<RetrievalMode>,
}

fn all_modes() -> Vec<RetrievalMode> {
    RetrievalMode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalAccepted {
    pub run_id: String,
}
