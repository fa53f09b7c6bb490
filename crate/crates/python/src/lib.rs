//! Python bindings.
//!
//! ```python
//! import litrag
//! litrag.ingest("papers", "index", provider="mock")
//! litrag.build_indexes("index", provider="mock")
//! engine = litrag.Engine.open("index", provider="mock")
//! answer = engine.query("Where does atrazine persist?", mode="hybrid")
//! ```
//!
//! Records (answers, chunks, reports) are returned as plain dicts and
//! lists. Failures raise `litrag.LitragError`. Long-running calls release
//! the GIL.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use litrag_core::evaluation::{run_evaluation, EvalConfig};
use litrag_core::ingest::{chunk_document, split_sentences as split};
use litrag_core::providers::mock::mock_embed as hash_embed;
use litrag_core::testset::{apply_annotations, read_annotations, testset_quality_report, TestSet};
use litrag_core::workspace::{self, make_providers, ProviderKind, ProviderSettings, Providers};
use litrag_core::{
    ChunkId, ChunkingConfig, ChunkingMethod, DocId, Document, EngineConfig, RetrievalMode,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(
    litrag,
    LitragError,
    PyException,
    "Raised when a litrag operation fails."
);

fn err(e: impl std::fmt::Display) -> PyErr {
    LitragError::new_err(e.to_string())
}

/// Converts a serializable record into Python objects via JSON.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// `"mock"` uses the deterministic offline providers; `"openai"` reads the
/// endpoint and key from `LITRAG_*` environment variables.
fn providers(provider: &str) -> PyResult<Providers> {
    let kind: ProviderKind = provider.parse().map_err(LitragError::new_err)?;
    let mut settings = ProviderSettings {
        kind,
        ..ProviderSettings::default()
    };
    settings.config.apply_env(|k| std::env::var(k).ok());
    make_providers(&settings).map_err(err)
}

fn parse_mode(mode: &str) -> PyResult<RetrievalMode> {
    mode.parse().map_err(LitragError::new_err)
}

fn chunking(
    method: &str,
    breakpoint_percentile: f64,
    buffer_size: usize,
    max_tokens: usize,
) -> PyResult<ChunkingConfig> {
    let method = match method {
        "semantic" => ChunkingMethod::Semantic,
        "sentence" => ChunkingMethod::Sentence,
        "token" => ChunkingMethod::Token,
        other => {
            return Err(LitragError::new_err(format!(
                "unknown chunking method {other:?}"
            )))
        }
    };
    let config = ChunkingConfig {
        buffer_size,
        breakpoint_percentile,
        max_tokens_fixed: max_tokens,
        method,
    };
    config.validate().map_err(err)?;
    Ok(config)
}

/// Splits normalized text into sentences.
#[pyfunction]
fn split_sentences(text: &str) -> PyResult<Vec<String>> {
    let doc = Document::from_text("input.txt", text, Default::default()).map_err(err)?;
    Ok(split(&doc.body).into_iter().map(|s| s.text).collect())
}

/// Chunks one text and returns the chunk records.
#[pyfunction]
#[pyo3(signature = (text, method="semantic", breakpoint_percentile=95.0, buffer_size=1, max_tokens=200, provider="mock"))]
fn chunk_text<'py>(
    py: Python<'py>,
    text: &str,
    method: &str,
    breakpoint_percentile: f64,
    buffer_size: usize,
    max_tokens: usize,
    provider: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let config = chunking(method, breakpoint_percentile, buffer_size, max_tokens)?;
    let (_, embedder) = providers(provider)?;
    let doc = Document::from_text("input.txt", text, Default::default()).map_err(err)?;
    let chunks = py
        .detach(|| chunk_document(&doc, &config, embedder.as_ref()))
        .map_err(err)?;
    to_py(py, &chunks)
}

/// Deterministic hash embedding used by the mock provider.
#[pyfunction]
#[pyo3(signature = (text, dim=256, seed=0))]
fn mock_embed(text: &str, dim: usize, seed: u64) -> PyResult<Vec<f32>> {
    if dim < 2 {
        return Err(LitragError::new_err("dim must be at least 2"));
    }
    Ok(hash_embed(text, dim, seed).values)
}

/// Loads and chunks every `*.txt` under `corpus_dir` into `index_dir`.
#[pyfunction]
#[pyo3(signature = (corpus_dir, index_dir, method="semantic", breakpoint_percentile=95.0, provider="mock"))]
fn ingest<'py>(
    py: Python<'py>,
    corpus_dir: PathBuf,
    index_dir: PathBuf,
    method: &str,
    breakpoint_percentile: f64,
    provider: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let config = chunking(method, breakpoint_percentile, 1, 200)?;
    let (_, embedder) = providers(provider)?;
    let corpus = py
        .detach(|| workspace::ingest_dir(&corpus_dir, &index_dir, &config, embedder.as_ref(), 4))
        .map_err(err)?;
    let summary = serde_json::json!({
        "documents": corpus.documents().len(),
        "chunks": corpus.chunks().len(),
        "manifest_hash": corpus.manifest_hash(),
    });
    to_py(py, &summary)
}

/// Builds the vector and/or graph index over the ingested corpus.
#[pyfunction]
#[pyo3(signature = (index_dir, vector=true, graph=true, max_paths_per_chunk=10, provider="mock"))]
fn build_indexes<'py>(
    py: Python<'py>,
    index_dir: PathBuf,
    vector: bool,
    graph: bool,
    max_paths_per_chunk: usize,
    provider: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let (llm, embedder) = providers(provider)?;
    let summary = py
        .detach(|| {
            let corpus = workspace::load_corpus_from(&index_dir)?;
            let mut options = workspace::BuildOptions {
                vector,
                graph,
                ..Default::default()
            };
            options.graph_build.max_paths_per_chunk = max_paths_per_chunk;
            workspace::build_indexes(
                &index_dir,
                &corpus,
                &options,
                llm.as_ref(),
                embedder.as_ref(),
            )
            .map(|(s, _, _)| s)
        })
        .map_err(err)?;
    to_py(py, &summary)
}

/// Keeps items whose annotations are all yes; returns the kept count.
#[pyfunction]
fn filter_testset(input: PathBuf, annotations: PathBuf, output: PathBuf) -> PyResult<usize> {
    let set = TestSet::load(&input).map_err(err)?;
    let sheet = read_annotations(&annotations).map_err(err)?;
    let filtered = apply_annotations(&set, &sheet).map_err(err)?;
    filtered.save(&output).map_err(err)?;
    Ok(filtered.len())
}

/// Verdict counts and percentages for one annotation sheet.
#[pyfunction]
fn quality_report<'py>(py: Python<'py>, annotations: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let sheet = read_annotations(&annotations).map_err(err)?;
    to_py(py, &testset_quality_report(&sheet).map_err(err)?)
}

/// Query engine over an index directory.
#[pyclass(frozen, module = "litrag")]
struct Engine {
    engine: Arc<litrag_core::Engine>,
    providers: Providers,
    index_dir: PathBuf,
}

#[pymethods]
impl Engine {
    #[staticmethod]
    #[pyo3(signature = (index_dir, provider="mock"))]
    fn open(py: Python<'_>, index_dir: PathBuf, provider: &str) -> PyResult<Self> {
        let providers = providers(provider)?;
        let engine = py
            .detach(|| workspace::open_engine(&index_dir))
            .map_err(err)?;
        Ok(Self {
            engine: Arc::new(engine),
            providers,
            index_dir,
        })
    }

    #[getter]
    fn index_dir(&self) -> PathBuf {
        self.index_dir.clone()
    }

    #[getter]
    fn has_vector_index(&self) -> bool {
        self.engine.vector_index().is_some()
    }

    #[getter]
    fn has_graph(&self) -> bool {
        self.engine.graph().is_some()
    }

    /// Answers `query` and returns the answer record with its contexts,
    /// citations and trace.
    #[pyo3(signature = (query, mode="hybrid", doc=None, top_k=None))]
    fn query<'py>(
        &self,
        py: Python<'py>,
        query: &str,
        mode: &str,
        doc: Option<String>,
        top_k: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mode = parse_mode(mode)?;
        let mut config = EngineConfig::default();
        if let Some(doc) = doc {
            config = config.single_doc(DocId::new(doc));
        }
        if let Some(k) = top_k {
            config.top_k = k;
        }
        let (llm, embedder) = &self.providers;
        let answer = py
            .detach(|| {
                self.engine
                    .answer_query(query, mode, &config, llm.as_ref(), embedder.as_ref())
            })
            .map_err(err)?;
        to_py(py, &answer)
    }

    /// Summaries of the indexed documents.
    fn documents<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let corpus = self.engine.corpus();
        let docs: Vec<_> = corpus
            .documents()
            .iter()
            .map(|d| {
                serde_json::json!({
                    "doc_id": d.doc_id,
                    "title": d.title,
                    "source_path": d.source_path,
                    "chunks": corpus.chunks_of(&d.doc_id).count(),
                })
            })
            .collect();
        to_py(py, &docs)
    }

    /// One chunk record, or `None` when the id is unknown.
    fn chunk<'py>(&self, py: Python<'py>, chunk_id: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.engine
            .corpus()
            .chunk(&ChunkId::new(chunk_id))
            .map(|c| to_py(py, c))
            .transpose()
    }

    /// Evaluates a filtered test set and writes the report into `out_dir`.
    #[pyo3(signature = (testset, out_dir, modes=vec!["vector".to_string(), "graph".to_string(), "hybrid".to_string()]))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        testset: PathBuf,
        out_dir: PathBuf,
        modes: Vec<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let modes: BTreeSet<RetrievalMode> = modes
            .iter()
            .map(|m| parse_mode(m))
            .collect::<PyResult<_>>()?;
        let set = TestSet::load(&testset).map_err(err)?;
        let (llm, embedder) = &self.providers;
        let report = py
            .detach(|| {
                let report = run_evaluation(
                    &self.engine,
                    &set,
                    &modes,
                    &EvalConfig::default(),
                    llm.as_ref(),
                    embedder.as_ref(),
                )?;
                report.save(&out_dir)?;
                Ok::<_, litrag_core::Error>(report)
            })
            .map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Engine(index_dir={:?}, documents={}, vector={}, graph={})",
            self.index_dir.display().to_string(),
            self.engine.corpus().documents().len(),
            self.has_vector_index(),
            self.has_graph()
        )
    }
}

#[pymodule]
fn litrag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LitragError", m.py().get_type::<LitragError>())?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_text, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(build_indexes, m)?)?;
    m.add_function(wrap_pyfunction!(filter_testset, m)?)?;
    m.add_function(wrap_pyfunction!(quality_report, m)?)?;
    Ok(())
}
