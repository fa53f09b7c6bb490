//! Knowledge graph built from LLM-extracted `(subject | relation | object)`
//! triplets, plus the two graph retrievers.
//!
//! Entities are merged on their case-folded name. Every edge remembers the
//! chunk it came from, and a chunk contributes at most
//! `max_paths_per_chunk` edges.

mod extract;
mod retrieve;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use extract::{extract_triplets, parse_triplet_line, parse_triplets, Extraction};
pub use retrieve::{
    graph_retrieve, merge_hits, parse_keywords, synonym_retrieve, vector_context_retrieve,
    ChunkLookup, GraphRetrieveParams,
};
pub use store::{EDGES_FILE, META_FILE, NODES_FILE};

use crate::concurrency::map_bounded;
use crate::ids::{ChunkId, DocId, NodeId};
use crate::ingest::Chunk;
use crate::providers::{embed_texts, Embedder, Llm, ProviderError};
use crate::text::{match_key, sha256_hex};

pub const DEFAULT_MAX_PATHS_PER_CHUNK: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("chunk {0} is not in the corpus")]
    UnknownChunk(ChunkId),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt graph files: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub chunk_id: ChunkId,
    pub doc_id: DocId,
}

impl Triplet {
    pub fn render(&self) -> String {
        render_triplet(&self.subject, &self.relation, &self.object)
    }
}

/// Text form used in prompts and as the dedup key of triplet hits.
pub fn render_triplet(subject: &str, relation: &str, object: &str) -> String {
    format!("{subject} —{relation}→ {object}")
}

pub fn node_id_for(key: &str) -> NodeId {
    NodeId(format!("n-{}", &sha256_hex(key)[..12]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub node_id: NodeId,
    pub name: String,
    pub match_key: String,
    pub chunk_ids: BTreeSet<ChunkId>,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub relation: String,
    pub target: NodeId,
    pub chunk_id: ChunkId,
}

/// Chunk whose extraction produced nothing usable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionWarning {
    pub chunk_id: ChunkId,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitKind {
    Triplet,
    Chunk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphHit {
    pub kind: HitKind,
    pub text: String,
    pub score: f64,
    pub chunk_ids: BTreeSet<ChunkId>,
    pub hops: usize,
}

impl GraphHit {
    /// Identity used when merging result lists.
    pub fn key(&self) -> (HitKind, String) {
        match self.kind {
            HitKind::Triplet => (HitKind::Triplet, self.text.clone()),
            HitKind::Chunk => (
                HitKind::Chunk,
                self.chunk_ids
                    .iter()
                    .next()
                    .map(|c| c.0.clone())
                    .unwrap_or_default(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphBuildConfig {
    pub max_paths_per_chunk: usize,
    pub max_in_flight: usize,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        Self {
            max_paths_per_chunk: DEFAULT_MAX_PATHS_PER_CHUNK,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyGraph {
    nodes: Vec<EntityNode>,
    edges: Vec<Edge>,
    node_pos: HashMap<NodeId, usize>,
    max_paths_per_chunk: usize,
    embed_model_id: String,
    warnings: Vec<ExtractionWarning>,
}

impl Default for PropertyGraph {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            edges: Vec::new(),
            node_pos: HashMap::new(),
            max_paths_per_chunk: DEFAULT_MAX_PATHS_PER_CHUNK,
            embed_model_id: String::new(),
            warnings: Vec::new(),
        }
    }
}

impl PropertyGraph {
    /// Assembles and validates a graph from explicit parts.
    pub fn from_parts(
        nodes: Vec<EntityNode>,
        edges: Vec<Edge>,
        max_paths_per_chunk: usize,
        embed_model_id: impl Into<String>,
        warnings: Vec<ExtractionWarning>,
    ) -> Result<Self, GraphError> {
        let node_pos = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_id.clone(), i))
            .collect();
        let graph = Self {
            nodes,
            edges,
            node_pos,
            max_paths_per_chunk,
            embed_model_id: embed_model_id.into(),
            warnings,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Merges per-chunk triplets into nodes and edges, in the order given.
    /// Duplicate edges within a chunk are collapsed and each chunk keeps at
    /// most `max_paths_per_chunk` distinct edges. Node embeddings come from
    /// the entity names.
    pub fn assemble(
        triplets: &[Triplet],
        max_paths_per_chunk: usize,
        embedder: &dyn Embedder,
        warnings: Vec<ExtractionWarning>,
    ) -> Result<Self, GraphError> {
        if max_paths_per_chunk == 0 {
            return Err(GraphError::InvalidArgument(
                "max_paths_per_chunk must be at least 1".into(),
            ));
        }
        let mut nodes: Vec<EntityNode> = Vec::new();
        let mut by_key: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut seen_edges = HashSet::new();
        let mut per_chunk: HashMap<ChunkId, usize> = HashMap::new();
        for t in triplets {
            let (sk, ok) = (match_key(&t.subject), match_key(&t.object));
            let edge = Edge {
                source: node_id_for(&sk),
                relation: t.relation.clone(),
                target: node_id_for(&ok),
                chunk_id: t.chunk_id.clone(),
            };
            if seen_edges.contains(&edge) {
                continue;
            }
            let count = per_chunk.entry(t.chunk_id.clone()).or_default();
            if *count >= max_paths_per_chunk {
                continue;
            }
            *count += 1;
            for (key, name) in [(sk, &t.subject), (ok, &t.object)] {
                let pos = *by_key.entry(key.clone()).or_insert_with(|| {
                    nodes.push(EntityNode {
                        node_id: node_id_for(&key),
                        name: name.clone(),
                        match_key: key,
                        chunk_ids: BTreeSet::new(),
                        embedding: Vec::new(),
                    });
                    nodes.len() - 1
                });
                nodes[pos].chunk_ids.insert(t.chunk_id.clone());
            }
            seen_edges.insert(edge.clone());
            edges.push(edge);
        }
        if !nodes.is_empty() {
            let names: Vec<String> = nodes.iter().map(|n| n.name.clone()).collect();
            for (node, v) in nodes.iter_mut().zip(embed_texts(embedder, &names)?) {
                node.embedding = v.values;
            }
        }
        Self::from_parts(
            nodes,
            edges,
            max_paths_per_chunk,
            embedder.model_id(),
            warnings,
        )
    }

    /// Extracts triplets from every chunk and assembles the graph. Any
    /// provider failure aborts the whole build.
    pub fn build(
        chunks: &[Chunk],
        config: &GraphBuildConfig,
        llm: &dyn Llm,
        embedder: &dyn Embedder,
    ) -> Result<Self, GraphError> {
        if chunks.is_empty() {
            return Err(GraphError::InvalidArgument(
                "cannot build a graph from zero chunks".into(),
            ));
        }
        let results = map_bounded(chunks, config.max_in_flight, |_, chunk| {
            extract_triplets(chunk, config.max_paths_per_chunk, llm)
        });
        let mut triplets = Vec::new();
        let mut warnings = Vec::new();
        for (chunk, result) in chunks.iter().zip(results) {
            let extraction = result?;
            if let Some(message) = extraction.warning {
                tracing::warn!(chunk = %chunk.chunk_id, "{message}");
                warnings.push(ExtractionWarning {
                    chunk_id: chunk.chunk_id.clone(),
                    message,
                });
            }
            triplets.extend(extraction.triplets);
        }
        Self::assemble(&triplets, config.max_paths_per_chunk, embedder, warnings)
    }

    /// Checks referential integrity, key uniqueness and the per-chunk cap.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut keys = HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if self.node_pos.get(&n.node_id) != Some(&i) {
                return Err(GraphError::Invariant(format!(
                    "duplicate node id {}",
                    n.node_id
                )));
            }
            if !keys.insert(n.match_key.as_str()) {
                return Err(GraphError::Invariant(format!(
                    "duplicate match key {:?}",
                    n.match_key
                )));
            }
            if n.chunk_ids.is_empty() {
                return Err(GraphError::Invariant(format!(
                    "node {} has no provenance",
                    n.node_id
                )));
            }
        }
        let dims: BTreeSet<usize> = self.nodes.iter().map(|n| n.embedding.len()).collect();
        if dims.len() > 1 || dims.contains(&0) {
            return Err(GraphError::Invariant(
                "node embeddings must share one non-zero dimension".into(),
            ));
        }
        let mut per_chunk: BTreeMap<&ChunkId, usize> = BTreeMap::new();
        for e in &self.edges {
            for end in [&e.source, &e.target] {
                if !self.node_pos.contains_key(end) {
                    return Err(GraphError::Invariant(format!(
                        "edge endpoint {end} does not exist"
                    )));
                }
            }
            if e.relation.trim().is_empty() {
                return Err(GraphError::Invariant("edge with empty relation".into()));
            }
            *per_chunk.entry(&e.chunk_id).or_default() += 1;
        }
        if let Some((chunk, n)) = per_chunk
            .iter()
            .find(|(_, n)| **n > self.max_paths_per_chunk)
        {
            return Err(GraphError::Invariant(format!(
                "chunk {chunk} has {n} edges, cap is {}",
                self.max_paths_per_chunk
            )));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[EntityNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Option<&EntityNode> {
        self.node_pos.get(id).map(|&i| &self.nodes[i])
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_paths_per_chunk(&self) -> usize {
        self.max_paths_per_chunk
    }

    pub fn embed_model_id(&self) -> &str {
        &self.embed_model_id
    }

    pub fn warnings(&self) -> &[ExtractionWarning] {
        &self.warnings
    }

    pub fn render_edge(&self, e: &Edge) -> String {
        let name = |id: &NodeId| self.node(id).map(|n| n.name.as_str()).unwrap_or("?");
        render_triplet(name(&e.source), &e.relation, name(&e.target))
    }

    /// Edge count per chunk.
    pub fn edges_per_chunk(&self) -> BTreeMap<ChunkId, usize> {
        let mut out = BTreeMap::new();
        for e in &self.edges {
            *out.entry(e.chunk_id.clone()).or_default() += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ChunkingMethod;
    use crate::providers::mock::{MockEmbedder, ScriptedLlm};

    fn chunk(i: usize) -> Chunk {
        Chunk {
            chunk_id: ChunkId(format!("doc-x-c{i:04}")),
            doc_id: DocId::from("doc-x"),
            sentence_range: (i, i),
            text: format!("text {i}"),
            method: ChunkingMethod::Sentence,
        }
    }

    #[test]
    fn merges_entities_across_chunks() {
        let llm = ScriptedLlm::new([
            "(Glyphosate | inhibits | EPSPS)",
            "(glyphosate | persists in | Soil)",
        ]);
        let config = GraphBuildConfig {
            max_in_flight: 1,
            ..Default::default()
        };
        let g = PropertyGraph::build(
            &[chunk(0), chunk(1)],
            &config,
            &llm,
            &MockEmbedder::new(8, 1),
        )
        .unwrap();
        assert_eq!(g.nodes().len(), 3);
        let gly = g
            .nodes()
            .iter()
            .find(|n| n.match_key == "glyphosate")
            .unwrap();
        assert_eq!(gly.name, "Glyphosate");
        assert_eq!(gly.chunk_ids.len(), 2);
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn no_triplets_gives_empty_graph_with_warnings() {
        let llm = ScriptedLlm::new(["nothing here", "still nothing"]);
        let config = GraphBuildConfig {
            max_in_flight: 1,
            ..Default::default()
        };
        let g = PropertyGraph::build(
            &[chunk(0), chunk(1)],
            &config,
            &llm,
            &MockEmbedder::new(8, 1),
        )
        .unwrap();
        assert!(g.is_empty());
        assert_eq!(g.warnings().len(), 2);
    }

    #[test]
    fn cap_enforced_per_chunk() {
        let lines: Vec<String> = (0..15).map(|i| format!("(A{i} | r | B{i})")).collect();
        let llm = ScriptedLlm::new([lines.join("\n")]);
        let g = PropertyGraph::build(
            &[chunk(0)],
            &GraphBuildConfig::default(),
            &llm,
            &MockEmbedder::new(8, 1),
        )
        .unwrap();
        assert_eq!(g.edges().len(), 10);
        let t: Vec<Triplet> = (0..15)
            .map(|i| Triplet {
                subject: format!("S{i}"),
                relation: "r".into(),
                object: "O".into(),
                chunk_id: chunk(0).chunk_id,
                doc_id: DocId::from("doc-x"),
            })
            .collect();
        let g = PropertyGraph::assemble(&t, 4, &MockEmbedder::new(8, 1), vec![]).unwrap();
        assert_eq!(g.edges_per_chunk()[&chunk(0).chunk_id], 4);
    }

    #[test]
    fn provider_failure_aborts_build() {
        let llm =
            ScriptedLlm::with_results([Ok("(A | r | B)".into()), Err(ProviderError::mock("down"))]);
        let config = GraphBuildConfig {
            max_in_flight: 1,
            ..Default::default()
        };
        let err = PropertyGraph::build(
            &[chunk(0), chunk(1)],
            &config,
            &llm,
            &MockEmbedder::new(8, 1),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Provider(_)));
    }

    #[test]
    fn dangling_edge_rejected() {
        let edge = Edge {
            source: NodeId::from("n-a"),
            relation: "r".into(),
            target: NodeId::from("n-b"),
            chunk_id: ChunkId::from("c"),
        };
        assert!(PropertyGraph::from_parts(vec![], vec![edge], 10, "m", vec![]).is_err());
    }
}
