//! On-disk index directory and the pipeline steps that fill it.
//!
//! ```text
//! <index_dir>/
//!   manifest.json  documents.jsonl  chunks.jsonl
//!   vector.meta.json  vector.f32  vector.ids.jsonl
//!   graph.nodes.jsonl  graph.edges.jsonl  graph.meta.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::graph::{GraphBuildConfig, GraphError, PropertyGraph};
use crate::ingest::{load_corpus, ChunkingConfig, Corpus, IngestError};
use crate::providers::mock::{HeuristicLlm, MockEmbedder, MockMode, TranscriptLlm};
use crate::providers::{Embedder, Llm, OpenAiClient, ProviderConfig, ProviderError};
use crate::vector_index::{IndexError, IndexOptions, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no ingested corpus in {0}; run ingest first")]
    NoCorpus(PathBuf),
    #[error("nothing to build: request vector and/or graph")]
    NothingToBuild,
}

impl WorkspaceError {
    pub fn provider_error(&self) -> Option<&ProviderError> {
        match self {
            WorkspaceError::Provider(e)
            | WorkspaceError::Ingest(IngestError::Provider(e))
            | WorkspaceError::Index(IndexError::Provider(e))
            | WorkspaceError::Graph(GraphError::Provider(e)) => Some(e),
            _ => None,
        }
    }
}

/// Loads every `*.txt` in `corpus_dir`, chunks it and writes the corpus
/// files into `index_dir`.
pub fn ingest_dir(
    corpus_dir: &Path,
    index_dir: &Path,
    chunking: &ChunkingConfig,
    embedder: &dyn Embedder,
    max_in_flight: usize,
) -> Result<Corpus, WorkspaceError> {
    chunking.validate()?;
    let docs = load_corpus(corpus_dir)?;
    let corpus = Corpus::build(docs, chunking, embedder, max_in_flight)?;
    corpus.save(index_dir)?;
    Ok(corpus)
}

pub fn load_corpus_from(index_dir: &Path) -> Result<Corpus, WorkspaceError> {
    if !Corpus::exists(index_dir) {
        return Err(WorkspaceError::NoCorpus(index_dir.to_path_buf()));
    }
    Ok(Corpus::load(index_dir)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub vector: bool,
    pub graph: bool,
    pub index: IndexOptions,
    pub graph_build: GraphBuildConfig,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            vector: true,
            graph: true,
            index: IndexOptions::default(),
            graph_build: GraphBuildConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub chunks: usize,
    pub vector_entries: Option<usize>,
    pub graph_nodes: Option<usize>,
    pub graph_edges: Option<usize>,
    pub extraction_warnings: usize,
}

/// Builds the requested indexes in memory, then persists them. A failed
/// build leaves the previous files untouched.
pub fn build_indexes(
    index_dir: &Path,
    corpus: &Corpus,
    options: &BuildOptions,
    llm: &dyn Llm,
    embedder: &dyn Embedder,
) -> Result<(BuildSummary, Option<VectorIndex>, Option<PropertyGraph>), WorkspaceError> {
    if !options.vector && !options.graph {
        return Err(WorkspaceError::NothingToBuild);
    }
    let mut summary = BuildSummary {
        chunks: corpus.chunks().len(),
        ..Default::default()
    };
    let vector = if options.vector {
        Some(VectorIndex::build(
            corpus.chunks(),
            embedder,
            &options.index,
        )?)
    } else {
        None
    };
    let graph = if options.graph {
        Some(PropertyGraph::build(
            corpus.chunks(),
            &options.graph_build,
            llm,
            embedder,
        )?)
    } else {
        None
    };
    if let Some(v) = &vector {
        v.save(index_dir)?;
        summary.vector_entries = Some(v.len());
    }
    if let Some(g) = &graph {
        g.save(index_dir)?;
        summary.graph_nodes = Some(g.nodes().len());
        summary.graph_edges = Some(g.edges().len());
        summary.extraction_warnings = g.warnings().len();
    }
    Ok((summary, vector, graph))
}

/// Deletes persisted index files so a later [`open_engine`] does not pair
/// them with a different corpus. Missing files are not an error.
pub fn remove_index_files(index_dir: &Path, vector: bool, graph: bool) -> std::io::Result<()> {
    let mut names = Vec::new();
    if vector {
        names.extend([
            crate::vector_index::META_FILE,
            crate::vector_index::VECTORS_FILE,
            crate::vector_index::IDS_FILE,
        ]);
    }
    if graph {
        names.extend([
            crate::graph::NODES_FILE,
            crate::graph::EDGES_FILE,
            crate::graph::META_FILE,
        ]);
    }
    for name in names {
        match std::fs::remove_file(index_dir.join(name)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e),
            _ => {}
        }
    }
    Ok(())
}

/// Engine over whatever has been built in `index_dir`.
pub fn open_engine(index_dir: &Path) -> Result<Engine, WorkspaceError> {
    let corpus = load_corpus_from(index_dir)?;
    let vector = if VectorIndex::exists(index_dir) {
        Some(VectorIndex::load(index_dir)?)
    } else {
        None
    };
    let graph = if PropertyGraph::exists(index_dir) {
        Some(PropertyGraph::load(index_dir)?)
    } else {
        None
    };
    Ok(Engine::new(corpus, vector, graph))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    OpenAi,
    Mock,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "openai" => Ok(ProviderKind::OpenAi),
            "mock" => Ok(ProviderKind::Mock),
            other => Err(format!(
                "unknown provider {other:?} (expected openai or mock)"
            )),
        }
    }
}

/// Which backends to construct. The mock backend pairs the rule-based LLM
/// (or a recorded transcript) with a deterministic embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    #[serde(flatten)]
    pub config: ProviderConfig,
    pub mock_dim: usize,
    pub mock_seed: u64,
    pub mock_mode: MockMode,
    pub transcript: Option<PathBuf>,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::OpenAi,
            config: ProviderConfig::default(),
            mock_dim: 256,
            mock_seed: 0,
            mock_mode: MockMode::BagOfWords,
            transcript: None,
        }
    }
}

impl ProviderSettings {
    pub fn mock() -> Self {
        Self {
            kind: ProviderKind::Mock,
            ..Default::default()
        }
    }
}

pub type Providers = (Arc<dyn Llm>, Arc<dyn Embedder>);

pub fn make_providers(settings: &ProviderSettings) -> Result<Providers, ProviderError> {
    match settings.kind {
        ProviderKind::Mock => {
            let embedder = Arc::new(MockEmbedder::with_mode(
                settings.mock_dim.max(2),
                settings.mock_seed,
                settings.mock_mode,
            ));
            let llm: Arc<dyn Llm> = match &settings.transcript {
                Some(path) => Arc::new(TranscriptLlm::load(path)?),
                None => Arc::new(HeuristicLlm::new()),
            };
            Ok((llm, embedder))
        }
        ProviderKind::OpenAi => {
            if settings.config.api_key.is_empty() {
                return Err(ProviderError::InvalidRequest(
                    "no API key configured; set LITRAG_API_KEY or use the mock provider".into(),
                ));
            }
            let client = Arc::new(OpenAiClient::new(settings.config.clone())?);
            Ok((client.clone(), client))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineConfig, RetrievalMode};
    use std::fs;

    #[test]
    fn ingest_build_open_answer() {
        let src = tempfile::tempdir().unwrap();
        fs::write(
            src.path().join("a.txt"),
            "Atrazine is a Herbicide. Atrazine persists in Groundwater. Bees avoid Clover.",
        )
        .unwrap();
        fs::write(
            src.path().join("b.txt"),
            "Glyphosate inhibits EPSPS. Glyphosate binds Soil particles.",
        )
        .unwrap();
        let idx = tempfile::tempdir().unwrap();
        let (llm, embedder) = make_providers(&ProviderSettings::mock()).unwrap();
        let corpus = ingest_dir(
            src.path(),
            idx.path(),
            &ChunkingConfig::default(),
            embedder.as_ref(),
            2,
        )
        .unwrap();
        assert_eq!(corpus.documents().len(), 2);
        assert!(open_engine(idx.path()).unwrap().vector_index().is_none());
        let (summary, _, _) = build_indexes(
            idx.path(),
            &corpus,
            &BuildOptions::default(),
            llm.as_ref(),
            embedder.as_ref(),
        )
        .unwrap();
        assert!(summary.graph_edges.unwrap() > 0);
        let engine = open_engine(idx.path()).unwrap();
        for mode in RetrievalMode::ALL {
            let a = engine
                .answer_query(
                    "Where does atrazine persist?",
                    mode,
                    &EngineConfig::default(),
                    llm.as_ref(),
                    embedder.as_ref(),
                )
                .unwrap();
            assert!(!a.text.is_empty());
        }
    }

    #[test]
    fn removing_index_files_leaves_corpus() {
        let src = tempfile::tempdir().unwrap();
        fs::write(
            src.path().join("a.txt"),
            "Atrazine is a Herbicide. Atrazine persists in Groundwater.",
        )
        .unwrap();
        let idx = tempfile::tempdir().unwrap();
        let (llm, embedder) = make_providers(&ProviderSettings::mock()).unwrap();
        let corpus = ingest_dir(
            src.path(),
            idx.path(),
            &ChunkingConfig::default(),
            embedder.as_ref(),
            1,
        )
        .unwrap();
        build_indexes(
            idx.path(),
            &corpus,
            &BuildOptions::default(),
            llm.as_ref(),
            embedder.as_ref(),
        )
        .unwrap();
        remove_index_files(idx.path(), true, false).unwrap();
        let engine = open_engine(idx.path()).unwrap();
        assert!(engine.vector_index().is_none());
        assert!(engine.graph().is_some());
        remove_index_files(idx.path(), true, true).unwrap();
        assert!(open_engine(idx.path()).unwrap().graph().is_none());
    }

    #[test]
    fn open_without_corpus() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            open_engine(dir.path()),
            Err(WorkspaceError::NoCorpus(_))
        ));
    }

    #[test]
    fn openai_without_key_is_rejected() {
        let err = make_providers(&ProviderSettings::default()).err().unwrap();
        assert!(err.to_string().contains("LITRAG_API_KEY"));
    }
}
