//! Retrieval in vector, graph and hybrid mode, and answer synthesis.
//!
//! Hybrid mode runs both retrievers with the same configuration, merges
//! their items and issues one prompt over the merged context.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::graph::{
    graph_retrieve, ChunkLookup, GraphError, GraphHit, GraphRetrieveParams, HitKind, PropertyGraph,
};
use crate::ids::{ChunkId, DocId};
use crate::ingest::Corpus;
use crate::prompts;
use crate::providers::{
    complete_prompt, CountingEmbedder, CountingLlm, Embedder, Llm, ProviderError,
};
use crate::vector_index::{IndexError, VectorIndex};

pub const DEFAULT_CONTEXT_BUDGET: usize = 24_000;
pub const MIN_CONTEXT_BUDGET: usize = 1_000;
pub const REFUSAL_TEXT: &str = "insufficient context";

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Index(IndexError),
    #[error(transparent)]
    Graph(GraphError),
    #[error("no {0} index loaded; run an index build first")]
    NoIndex(&'static str),
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("query is empty")]
    EmptyQuery,
}

impl From<IndexError> for EngineError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Provider(p) => EngineError::Provider(p),
            other => EngineError::Index(other),
        }
    }
}

impl From<GraphError> for EngineError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Provider(p) => EngineError::Provider(p),
            other => EngineError::Graph(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Vector,
    Graph,
    Hybrid,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 3] = [
        RetrievalMode::Vector,
        RetrievalMode::Graph,
        RetrievalMode::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Vector => "vector",
            RetrievalMode::Graph => "graph",
            RetrievalMode::Hybrid => "hybrid",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != RetrievalMode::Vector
    }

    pub fn uses_vectors(self) -> bool {
        self != RetrievalMode::Graph
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vector" => Ok(RetrievalMode::Vector),
            "graph" => Ok(RetrievalMode::Graph),
            "hybrid" => Ok(RetrievalMode::Hybrid),
            other => Err(format!(
                "unknown retrieval mode {other:?} (expected vector, graph or hybrid)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Chunk,
    Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub kind: ItemKind,
    pub text: String,
    pub score: f64,
    pub chunk_ids: BTreeSet<ChunkId>,
    pub doc_ids: BTreeSet<DocId>,
}

impl ContextItem {
    /// Dedup identity: the chunk id for chunks, the rendered text for triplets.
    pub fn key(&self) -> (ItemKind, String) {
        match self.kind {
            ItemKind::Chunk => (
                ItemKind::Chunk,
                self.chunk_ids
                    .iter()
                    .next()
                    .map(|c| c.0.clone())
                    .unwrap_or_default(),
            ),
            ItemKind::Triplet => (ItemKind::Triplet, self.text.clone()),
        }
    }

    pub fn rendered_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Score descending, then text ascending.
fn item_order(a: &ContextItem, b: &ContextItem) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| a.kind.cmp(&b.kind))
}

/// Dedups on [`ContextItem::key`] keeping the maximum score and the union of
/// provenance, then sorts.
pub fn merge_items(lists: impl IntoIterator<Item = Vec<ContextItem>>) -> Vec<ContextItem> {
    let mut merged: BTreeMap<(ItemKind, String), ContextItem> = BTreeMap::new();
    for item in lists.into_iter().flatten() {
        match merged.get_mut(&item.key()) {
            Some(existing) => {
                existing.score = existing.score.max(item.score);
                existing.chunk_ids.extend(item.chunk_ids);
                existing.doc_ids.extend(item.doc_ids);
            }
            None => {
                merged.insert(item.key(), item);
            }
        }
    }
    let mut items: Vec<ContextItem> = merged.into_values().collect();
    items.sort_by(item_order);
    items
}

/// Drops items until the summed text length fits `budget`: lowest score
/// first, and at equal score triplets before chunks.
pub fn truncate_to_budget(items: &mut Vec<ContextItem>, budget: usize) -> usize {
    let mut total: usize = items.iter().map(ContextItem::rendered_len).sum();
    let mut dropped = 0;
    while total > budget {
        let victim = (0..items.len())
            .min_by(|&a, &b| {
                let (x, y) = (&items[a], &items[b]);
                x.score
                    .total_cmp(&y.score)
                    .then_with(|| (x.kind == ItemKind::Chunk).cmp(&(y.kind == ItemKind::Chunk)))
                    .then_with(|| b.cmp(&a))
            })
            .expect("total > 0 implies items");
        total -= items.remove(victim).rendered_len();
        dropped += 1;
    }
    dropped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub mode: RetrievalMode,
    pub query: String,
    pub items: Vec<ContextItem>,
}

impl RetrievedContext {
    pub fn chunk_items(&self) -> impl Iterator<Item = &ContextItem> {
        self.items.iter().filter(|i| i.kind == ItemKind::Chunk)
    }

    pub fn triplet_items(&self) -> impl Iterator<Item = &ContextItem> {
        self.items.iter().filter(|i| i.kind == ItemKind::Triplet)
    }

    /// Every text an answer may draw on, in item order.
    pub fn texts(&self) -> Vec<String> {
        self.items.iter().map(|i| i.text.clone()).collect()
    }

    pub fn provenance(&self) -> BTreeSet<&ChunkId> {
        self.items.iter().flat_map(|i| &i.chunk_ids).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    /// Passage number used in the prompt.
    pub number: usize,
    pub doc_id: DocId,
    pub chunk_id: ChunkId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub retrieve_ms: f64,
    pub generate_ms: f64,
    pub total_ms: f64,
    pub llm_calls: usize,
    pub embed_calls: usize,
    pub graph_used: bool,
    pub items_before_truncation: usize,
    pub items_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub mode: RetrievalMode,
    pub contexts: RetrievedContext,
    pub citations: Vec<Citation>,
    pub trace: Trace,
}

impl Answer {
    /// Copy with wall-clock timings zeroed, for byte-level comparisons.
    pub fn without_timings(&self) -> Answer {
        let mut a = self.clone();
        a.trace.retrieve_ms = 0.0;
        a.trace.generate_ms = 0.0;
        a.trace.total_ms = 0.0;
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub top_k: usize,
    pub top_k_nodes: usize,
    pub path_depth: usize,
    pub max_synonyms: usize,
    /// Character budget for the summed item texts.
    pub context_budget: usize,
    pub doc_filter: Option<BTreeSet<DocId>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            top_k: crate::vector_index::DEFAULT_TOP_K,
            top_k_nodes: 4,
            path_depth: 1,
            max_synonyms: 10,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            doc_filter: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        for (name, v) in [
            ("top_k", self.top_k),
            ("top_k_nodes", self.top_k_nodes),
            ("path_depth", self.path_depth),
            ("max_synonyms", self.max_synonyms),
        ] {
            if v == 0 {
                return Err(EngineError::InvalidConfig(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        if self.context_budget < MIN_CONTEXT_BUDGET {
            return Err(EngineError::InvalidConfig(format!(
                "context_budget must be at least {MIN_CONTEXT_BUDGET}"
            )));
        }
        if self.doc_filter.as_ref().is_some_and(BTreeSet::is_empty) {
            return Err(EngineError::InvalidConfig("doc_filter is empty".into()));
        }
        Ok(())
    }

    pub fn graph_params(&self) -> GraphRetrieveParams {
        GraphRetrieveParams {
            top_k_nodes: self.top_k_nodes,
            path_depth: self.path_depth,
            max_synonyms: self.max_synonyms,
        }
    }

    /// Restricts retrieval to one document (the single-paper scenario).
    pub fn single_doc(mut self, doc: DocId) -> Self {
        self.doc_filter = Some([doc].into());
        self
    }
}

/// Corpus plus whichever indexes have been built. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct Engine {
    corpus: Corpus,
    vector: Option<VectorIndex>,
    graph: Option<PropertyGraph>,
}

impl Engine {
    pub fn new(corpus: Corpus, vector: Option<VectorIndex>, graph: Option<PropertyGraph>) -> Self {
        Self {
            corpus,
            vector,
            graph,
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn vector_index(&self) -> Option<&VectorIndex> {
        self.vector.as_ref()
    }

    pub fn graph(&self) -> Option<&PropertyGraph> {
        self.graph.as_ref()
    }

    fn check(
        &self,
        query: &str,
        mode: RetrievalMode,
        config: &EngineConfig,
    ) -> Result<(), EngineError> {
        config.validate()?;
        if query.trim().is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        if let Some(doc) = config
            .doc_filter
            .iter()
            .flatten()
            .find(|d| self.corpus.document(d).is_none())
        {
            return Err(EngineError::UnknownDocument(doc.clone()));
        }
        if mode.uses_vectors() && self.vector.is_none() {
            return Err(EngineError::NoIndex("vector"));
        }
        if mode.uses_graph() && self.graph.is_none() {
            return Err(EngineError::NoIndex("graph"));
        }
        Ok(())
    }

    fn vector_items(
        &self,
        query: &str,
        config: &EngineConfig,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ContextItem>, EngineError> {
        let index = self.vector.as_ref().ok_or(EngineError::NoIndex("vector"))?;
        let hits = index.retrieve(query, config.top_k, config.doc_filter.as_ref(), embedder)?;
        Ok(merge_items([hits
            .into_iter()
            .map(|h| ContextItem {
                kind: ItemKind::Chunk,
                text: h.text,
                score: h.score,
                chunk_ids: [h.chunk_id].into(),
                doc_ids: [h.doc_id].into(),
            })
            .collect()]))
    }

    fn graph_items(
        &self,
        query: &str,
        config: &EngineConfig,
        llm: &dyn Llm,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ContextItem>, EngineError> {
        let graph = self.graph.as_ref().ok_or(EngineError::NoIndex("graph"))?;
        let hits = graph_retrieve(
            graph,
            query,
            &config.graph_params(),
            llm,
            embedder,
            &self.corpus,
            config.doc_filter.as_ref(),
        )?;
        Ok(merge_items([hits
            .into_iter()
            .map(|h| self.graph_item(h))
            .collect()]))
    }

    fn graph_item(&self, hit: GraphHit) -> ContextItem {
        let doc_ids = hit
            .chunk_ids
            .iter()
            .filter_map(|c| self.corpus.chunk_doc(c).cloned())
            .collect();
        ContextItem {
            kind: match hit.kind {
                HitKind::Chunk => ItemKind::Chunk,
                HitKind::Triplet => ItemKind::Triplet,
            },
            text: hit.text,
            score: hit.score,
            chunk_ids: hit.chunk_ids,
            doc_ids,
        }
    }

    /// Deduplicated, sorted items before the context budget is applied. In
    /// hybrid mode the two branches run on separate threads.
    pub fn collect_items(
        &self,
        query: &str,
        mode: RetrievalMode,
        config: &EngineConfig,
        llm: &dyn Llm,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ContextItem>, EngineError> {
        self.check(query, mode, config)?;
        match mode {
            RetrievalMode::Vector => self.vector_items(query, config, embedder),
            RetrievalMode::Graph => self.graph_items(query, config, llm, embedder),
            RetrievalMode::Hybrid => {
                let (v, g) = std::thread::scope(|s| {
                    let g = s.spawn(|| self.graph_items(query, config, llm, embedder));
                    let v = self.vector_items(query, config, embedder);
                    (v, g.join().expect("graph retrieval thread panicked"))
                });
                Ok(merge_items([v?, g?]))
            }
        }
    }

    pub fn retrieve(
        &self,
        query: &str,
        mode: RetrievalMode,
        config: &EngineConfig,
        llm: &dyn Llm,
        embedder: &dyn Embedder,
    ) -> Result<RetrievedContext, EngineError> {
        let mut items = self.collect_items(query, mode, config, llm, embedder)?;
        truncate_to_budget(&mut items, config.context_budget);
        Ok(RetrievedContext {
            mode,
            query: query.to_string(),
            items,
        })
    }

    /// Retrieve then generate, with per-stage timings and provider call
    /// counts in the trace.
    pub fn answer_query(
        &self,
        query: &str,
        mode: RetrievalMode,
        config: &EngineConfig,
        llm: &dyn Llm,
        embedder: &dyn Embedder,
    ) -> Result<Answer, EngineError> {
        let llm = CountingLlm::new(llm);
        let embedder = CountingEmbedder::new(embedder);
        let start = Instant::now();
        let mut items = self.collect_items(query, mode, config, &llm, &embedder)?;
        let before = items.len();
        let dropped = truncate_to_budget(&mut items, config.context_budget);
        let context = RetrievedContext {
            mode,
            query: query.to_string(),
            items,
        };
        let retrieved_at = Instant::now();
        let mut answer = generate_answer(query, context, &llm)?;
        let done = Instant::now();
        answer.trace = Trace {
            retrieve_ms: (retrieved_at - start).as_secs_f64() * 1e3,
            generate_ms: (done - retrieved_at).as_secs_f64() * 1e3,
            total_ms: (done - start).as_secs_f64() * 1e3,
            llm_calls: llm.calls(),
            embed_calls: embedder.calls(),
            graph_used: mode.uses_graph(),
            items_before_truncation: before,
            items_dropped: dropped,
        };
        Ok(answer)
    }
}

/// Renders the mode's answer prompt. Passages are the chunk items in order,
/// numbered from 1.
pub fn render_answer_prompt(query: &str, context: &RetrievedContext) -> String {
    let passages: Vec<&str> = context.chunk_items().map(|i| i.text.as_str()).collect();
    let triplets: Vec<&str> = context.triplet_items().map(|i| i.text.as_str()).collect();
    match context.mode {
        RetrievalMode::Vector => prompts::vector_answer(&passages, query),
        RetrievalMode::Graph => prompts::graph_answer(&triplets, &passages, query),
        RetrievalMode::Hybrid => prompts::hybrid_answer(&triplets, &passages, query),
    }
}

static MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(\d+(?:\s*,\s*\d+)*)\]").expect("valid regex"));

/// Maps `[n]` and `[n, m]` markers to the numbered passages of `context`.
/// Unknown numbers are ignored; each passage is cited once, in order of
/// first mention.
pub fn parse_citations(text: &str, context: &RetrievedContext) -> Vec<Citation> {
    let passages: Vec<&ContextItem> = context.chunk_items().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for cap in MARKER.captures_iter(text) {
        for n in cap[1]
            .split(',')
            .filter_map(|s| s.trim().parse::<usize>().ok())
        {
            let Some(item) = n.checked_sub(1).and_then(|i| passages.get(i)) else {
                continue;
            };
            if !seen.insert(n) {
                continue;
            }
            let chunk_id = item
                .chunk_ids
                .iter()
                .next()
                .expect("chunk items carry their id")
                .clone();
            let doc_id = item
                .doc_ids
                .iter()
                .next()
                .cloned()
                .unwrap_or_else(|| DocId::from(""));
            out.push(Citation {
                number: n,
                doc_id,
                chunk_id,
            });
        }
    }
    out
}

/// One completion over the context. An empty context yields the refusal
/// answer without calling the model.
pub fn generate_answer(
    query: &str,
    context: RetrievedContext,
    llm: &dyn Llm,
) -> Result<Answer, EngineError> {
    let mode = context.mode;
    if context.items.is_empty() {
        return Ok(Answer {
            text: REFUSAL_TEXT.into(),
            mode,
            contexts: context,
            citations: Vec::new(),
            trace: Trace::default(),
        });
    }
    let text = complete_prompt(llm, &render_answer_prompt(query, &context))?
        .trim()
        .to_string();
    let citations = parse_citations(&text, &context);
    Ok(Answer {
        text,
        mode,
        contexts: context,
        citations,
        trace: Trace::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::ScriptedLlm;

    fn chunk_item(id: &str, doc: &str, text: &str, score: f64) -> ContextItem {
        ContextItem {
            kind: ItemKind::Chunk,
            text: text.into(),
            score,
            chunk_ids: [ChunkId::from(id)].into(),
            doc_ids: [DocId::from(doc)].into(),
        }
    }

    fn triplet_item(text: &str, score: f64) -> ContextItem {
        ContextItem {
            kind: ItemKind::Triplet,
            text: text.into(),
            score,
            chunk_ids: [ChunkId::from("c1")].into(),
            doc_ids: [DocId::from("D")].into(),
        }
    }

    #[test]
    fn mode_parses_and_serializes_lowercase() {
        assert_eq!(
            "Hybrid".parse::<RetrievalMode>().unwrap(),
            RetrievalMode::Hybrid
        );
        assert_eq!(
            serde_json::to_string(&RetrievalMode::Graph).unwrap(),
            "\"graph\""
        );
        assert!("dense".parse::<RetrievalMode>().is_err());
    }

    #[test]
    fn merge_dedups_and_keeps_max() {
        let merged = merge_items([
            vec![chunk_item("c1", "D", "alpha", 0.4)],
            vec![
                chunk_item("c1", "D", "alpha", 0.9),
                chunk_item("c2", "D", "beta", 0.9),
            ],
        ]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].score, 0.9);
        assert_eq!(merged[0].text, "alpha");
    }

    #[test]
    fn truncation_drops_lowest_and_triplets_first() {
        let long = "x".repeat(600);
        let mut items = vec![
            chunk_item("c1", "D", &long, 0.9),
            chunk_item("c2", "D", &format!("{long}y"), 0.5),
            triplet_item(&format!("{long}z"), 0.5),
        ];
        let dropped = truncate_to_budget(&mut items, 1300);
        assert_eq!(dropped, 1);
        assert!(items.iter().all(|i| i.kind == ItemKind::Chunk));
        truncate_to_budget(&mut items, 1000);
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].score, 0.9);
    }

    #[test]
    fn citation_maps_marker_to_chunk() {
        let ctx = RetrievedContext {
            mode: RetrievalMode::Vector,
            query: "q".into(),
            items: vec![
                chunk_item("chunk_1", "D", "first", 0.9),
                chunk_item("chunk_2", "E", "second", 0.8),
            ],
        };
        let llm = ScriptedLlm::new(["Answer [1]"]);
        let a = generate_answer("q", ctx, &llm).unwrap();
        assert_eq!(
            a.citations,
            [Citation {
                number: 1,
                doc_id: DocId::from("D"),
                chunk_id: ChunkId::from("chunk_1")
            }]
        );
        let ctx = a.contexts.clone();
        let cites = parse_citations("see [2, 1] and [2] and [7]", &ctx);
        assert_eq!(cites.iter().map(|c| c.number).collect::<Vec<_>>(), [2, 1]);
    }

    #[test]
    fn empty_context_refuses_without_llm() {
        let ctx = RetrievedContext {
            mode: RetrievalMode::Graph,
            query: "q".into(),
            items: vec![],
        };
        let llm = ScriptedLlm::new(Vec::<String>::new());
        let a = generate_answer("q", ctx, &llm).unwrap();
        assert_eq!(a.text, REFUSAL_TEXT);
        assert!(a.citations.is_empty());
        assert_eq!(llm.calls(), 0);
    }

    #[test]
    fn graph_prompt_has_both_sections() {
        let ctx = RetrievedContext {
            mode: RetrievalMode::Graph,
            query: "q".into(),
            items: vec![
                triplet_item("A —r→ B", 1.0),
                chunk_item("c1", "D", "A relates to B.", 0.5),
            ],
        };
        let p = render_answer_prompt("What is A?", &ctx);
        assert_eq!(prompts::section(&p, "TRIPLETS:"), Some("- A —r→ B"));
        assert_eq!(
            prompts::section(&p, "SOURCE PASSAGES:"),
            Some("[1] A relates to B.")
        );
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        assert!(EngineConfig {
            context_budget: 999,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EngineConfig {
            top_k: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
