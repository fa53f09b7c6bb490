//! Retrieval-augmented question answering over scientific literature.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`ingest`]: corpus loading, text normalization, sentence splitting and
//!   token/sentence/semantic chunking.
//! - [`providers`]: OpenAI-compatible chat and embedding clients plus
//!   deterministic mock providers.
//! - [`vector_index`]: exact and HNSW cosine search over chunk embeddings.
//! - [`graph`]: LLM triplet extraction, property graph assembly and graph
//!   retrieval (vector-context traversal and synonym keyword search).
//! - [`engine`]: vector, graph and hybrid retrieval and answer synthesis.
//! - [`testset`]: synthetic QA generation and annotation filtering.
//! - [`evaluation`]: cosine similarity, faithfulness and report rendering.
//! - [`workspace`]: the on-disk layout tying the pieces together.

pub mod concurrency;
pub mod engine;
pub mod evaluation;
pub mod graph;
pub mod ingest;
pub mod prompts;
pub mod providers;
pub mod testset;
pub mod text;
pub mod vector_index;
pub mod workspace;

mod ids;

pub use engine::{
    Answer, Citation, ContextItem, Engine, EngineConfig, EngineError, ItemKind, RetrievalMode,
    RetrievedContext,
};
pub use ids::{ChunkId, DocId, NodeId};
pub use ingest::{Chunk, ChunkingConfig, ChunkingMethod, Corpus, Document, IngestError, Sentence};
pub use providers::{ChatMessage, Embedder, EmbeddingVector, Llm, ProviderError};

/// Umbrella error for callers that drive several pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(#[from] vector_index::IndexError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Testset(#[from] testset::TestsetError),
    #[error(transparent)]
    Annotation(#[from] testset::AnnotationError),
    #[error(transparent)]
    Metric(#[from] evaluation::MetricError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error(transparent)]
    Workspace(#[from] workspace::WorkspaceError),
}

impl Error {
    /// Provider failure buried somewhere in the chain, if any.
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            Error::Provider(e) => Some(e),
            Error::Index(vector_index::IndexError::Provider(e)) => Some(e),
            Error::Graph(graph::GraphError::Provider(e)) => Some(e),
            Error::Engine(EngineError::Provider(e)) => Some(e),
            Error::Ingest(IngestError::Provider(e)) => Some(e),
            Error::Testset(testset::TestsetError::Provider(e)) => Some(e),
            Error::Metric(evaluation::MetricError::Provider(e)) => Some(e),
            Error::Workspace(w) => w.provider_error(),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
