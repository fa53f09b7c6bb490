use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, GraphHit, HitKind, PropertyGraph};
use crate::ids::{ChunkId, DocId, NodeId};
use crate::ingest::Corpus;
use crate::prompts;
use crate::providers::{complete_prompt, embed_one, Embedder, Llm};
use crate::text::{cosine, match_key};

/// Source of chunk texts and owning documents for graph hits.
pub trait ChunkLookup {
    fn chunk_text(&self, id: &ChunkId) -> Option<&str>;
    fn chunk_doc(&self, id: &ChunkId) -> Option<&DocId>;
}

impl ChunkLookup for Corpus {
    fn chunk_text(&self, id: &ChunkId) -> Option<&str> {
        self.chunk(id).map(|c| c.text.as_str())
    }
    fn chunk_doc(&self, id: &ChunkId) -> Option<&DocId> {
        self.chunk(id).map(|c| &c.doc_id)
    }
}

impl ChunkLookup for BTreeMap<ChunkId, (DocId, String)> {
    fn chunk_text(&self, id: &ChunkId) -> Option<&str> {
        self.get(id).map(|(_, t)| t.as_str())
    }
    fn chunk_doc(&self, id: &ChunkId) -> Option<&DocId> {
        self.get(id).map(|(d, _)| d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphRetrieveParams {
    pub top_k_nodes: usize,
    pub path_depth: usize,
    pub max_synonyms: usize,
}

impl Default for GraphRetrieveParams {
    fn default() -> Self {
        Self {
            top_k_nodes: 4,
            path_depth: 1,
            max_synonyms: 10,
        }
    }
}

/// Edges and nodes visible under an optional document filter.
struct View<'g> {
    graph: &'g PropertyGraph,
    edges: Vec<&'g Edge>,
    adjacency: HashMap<&'g NodeId, Vec<&'g NodeId>>,
}

impl<'g> View<'g> {
    fn new(
        graph: &'g PropertyGraph,
        lookup: &dyn ChunkLookup,
        doc_filter: Option<&BTreeSet<DocId>>,
    ) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for e in graph.edges() {
            let doc = lookup
                .chunk_doc(&e.chunk_id)
                .ok_or_else(|| GraphError::UnknownChunk(e.chunk_id.clone()))?;
            if doc_filter.is_none_or(|f| f.contains(doc)) {
                edges.push(e);
            }
        }
        let mut adjacency: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        for e in &edges {
            adjacency.entry(&e.source).or_default().push(&e.target);
            adjacency.entry(&e.target).or_default().push(&e.source);
        }
        Ok(Self {
            graph,
            edges,
            adjacency,
        })
    }

    fn node_visible(&self, id: &NodeId) -> bool {
        self.adjacency.contains_key(id)
    }

    /// Hop distance from `seed` to every node within `limit` hops.
    fn bfs(&self, seed: &'g NodeId, limit: usize) -> HashMap<&'g NodeId, usize> {
        let mut dist = HashMap::from([(seed, 0)]);
        let mut queue = VecDeque::from([seed]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur];
            if d == limit {
                continue;
            }
            for &nb in self.adjacency.get(cur).into_iter().flatten() {
                dist.entry(nb).or_insert_with(|| {
                    queue.push_back(nb);
                    d + 1
                });
            }
        }
        dist
    }

    /// Turns reached edges, with per-edge `(score, hops)`, into triplet hits
    /// (merged on rendered text) followed by provenance chunk hits.
    fn hits(
        &self,
        reached: &BTreeMap<usize, (f64, usize)>,
        lookup: &dyn ChunkLookup,
    ) -> Result<Vec<GraphHit>, GraphError> {
        let mut triplets: BTreeMap<String, GraphHit> = BTreeMap::new();
        let mut chunks: BTreeMap<ChunkId, GraphHit> = BTreeMap::new();
        for (&i, &(score, hops)) in reached {
            let e = self.edges[i];
            let text = self.graph.render_edge(e);
            absorb(
                triplets
                    .entry(text.clone())
                    .or_insert_with(|| blank(HitKind::Triplet, text)),
                score,
                hops,
                &e.chunk_id,
            );
            if !chunks.contains_key(&e.chunk_id) {
                let body = lookup
                    .chunk_text(&e.chunk_id)
                    .ok_or_else(|| GraphError::UnknownChunk(e.chunk_id.clone()))?;
                chunks.insert(e.chunk_id.clone(), blank(HitKind::Chunk, body.to_string()));
            }
            absorb(
                chunks.get_mut(&e.chunk_id).expect("inserted above"),
                score,
                hops,
                &e.chunk_id,
            );
        }
        let mut out: Vec<GraphHit> = triplets.into_values().chain(chunks.into_values()).collect();
        sort_hits(&mut out);
        Ok(out)
    }
}

fn blank(kind: HitKind, text: String) -> GraphHit {
    GraphHit {
        kind,
        text,
        score: f64::NEG_INFINITY,
        chunk_ids: BTreeSet::new(),
        hops: usize::MAX,
    }
}

fn absorb(hit: &mut GraphHit, score: f64, hops: usize, chunk: &ChunkId) {
    hit.score = hit.score.max(score);
    hit.hops = hit.hops.min(hops);
    hit.chunk_ids.insert(chunk.clone());
}

fn sort_hits(hits: &mut [GraphHit]) {
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.text.cmp(&b.text))
            .then_with(|| a.kind.cmp(&b.kind))
    });
}

/// Seeds are the `top_k_nodes` nodes most similar to the query; edges are
/// collected breadth-first in both directions up to `path_depth` hops. An
/// edge touching a node at distance `d` from a seed sits at hop `d + 1`.
/// Each hit keeps its smallest hop count over all seeds and the largest
/// similarity among the seeds that reach it.
pub fn vector_context_retrieve(
    graph: &PropertyGraph,
    query: &str,
    top_k_nodes: usize,
    path_depth: usize,
    embedder: &dyn Embedder,
    lookup: &dyn ChunkLookup,
    doc_filter: Option<&BTreeSet<DocId>>,
) -> Result<Vec<GraphHit>, GraphError> {
    if top_k_nodes == 0 || path_depth == 0 {
        return Err(GraphError::InvalidArgument(
            "top_k_nodes and path_depth must be at least 1".into(),
        ));
    }
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let view = View::new(graph, lookup, doc_filter)?;
    let q = embed_one(embedder, query)?;
    let mut scored: Vec<(f64, &NodeId)> = graph
        .nodes()
        .iter()
        .filter(|n| view.node_visible(&n.node_id))
        .map(|n| (cosine(&q.values, &n.embedding), &n.node_id))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(top_k_nodes);

    let mut reached: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (sim, seed) in scored {
        let dist = view.bfs(seed, path_depth - 1);
        for (i, e) in view.edges.iter().enumerate() {
            let near = [dist.get(&e.source), dist.get(&e.target)]
                .into_iter()
                .flatten()
                .min();
            if let Some(&d) = near {
                let entry = reached.entry(i).or_insert((f64::NEG_INFINITY, usize::MAX));
                entry.0 = entry.0.max(sim);
                entry.1 = entry.1.min(d + 1);
            }
        }
    }
    view.hits(&reached, lookup)
}

/// Cleans a synonym response into at most `max` distinct keywords. Lines
/// may carry bullets or numbering; comma-separated lists are split.
pub fn parse_keywords(response: &str, max: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for raw in response.lines().flat_map(|l| l.split(',')) {
        let t = raw.trim().trim_start_matches(['-', '*', '•']).trim_start();
        let t = match t.split_once(['.', ')']) {
            Some((num, rest)) if !num.is_empty() && num.chars().all(|c| c.is_ascii_digit()) => rest,
            _ => t,
        };
        let key = match_key(t.trim().trim_matches(['"', '\'', '`']));
        if key.is_empty() || !seen.insert(key.clone()) {
            continue;
        }
        out.push(key);
        if out.len() == max {
            break;
        }
    }
    out
}

/// Asks the LLM for keywords, then seeds on nodes whose match key equals
/// (score 1.0) or contains (score 0.5) a keyword. Incident edges are hop 1.
pub fn synonym_retrieve(
    graph: &PropertyGraph,
    query: &str,
    max_synonyms: usize,
    llm: &dyn Llm,
    lookup: &dyn ChunkLookup,
    doc_filter: Option<&BTreeSet<DocId>>,
) -> Result<Vec<GraphHit>, GraphError> {
    if max_synonyms == 0 {
        return Err(GraphError::InvalidArgument(
            "max_synonyms must be at least 1".into(),
        ));
    }
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let response = complete_prompt(llm, &prompts::synonyms(query, max_synonyms))?;
    let keywords = parse_keywords(&response, max_synonyms);
    let view = View::new(graph, lookup, doc_filter)?;
    let mut seeds: HashMap<&NodeId, f64> = HashMap::new();
    for n in graph
        .nodes()
        .iter()
        .filter(|n| view.node_visible(&n.node_id))
    {
        let score = keywords
            .iter()
            .filter_map(|k| {
                if *k == n.match_key {
                    Some(1.0)
                } else if n.match_key.contains(k.as_str()) {
                    Some(0.5)
                } else {
                    None
                }
            })
            .fold(None, |acc: Option<f64>, s| {
                Some(acc.map_or(s, |a| a.max(s)))
            });
        if let Some(s) = score {
            seeds.insert(&n.node_id, s);
        }
    }
    let mut reached: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (i, e) in view.edges.iter().enumerate() {
        let best = [seeds.get(&e.source), seeds.get(&e.target)]
            .into_iter()
            .flatten()
            .copied()
            .reduce(f64::max);
        if let Some(s) = best {
            reached.insert(i, (s, 1));
        }
    }
    view.hits(&reached, lookup)
}

/// Dedups hit lists on [`GraphHit::key`], keeping the best score and the
/// smallest hop count, and sorts by score then text.
pub fn merge_hits(lists: impl IntoIterator<Item = Vec<GraphHit>>) -> Vec<GraphHit> {
    let mut merged: BTreeMap<(HitKind, String), GraphHit> = BTreeMap::new();
    for hit in lists.into_iter().flatten() {
        match merged.get_mut(&hit.key()) {
            Some(existing) => {
                existing.score = existing.score.max(hit.score);
                existing.hops = existing.hops.min(hit.hops);
                existing.chunk_ids.extend(hit.chunk_ids);
            }
            None => {
                merged.insert(hit.key(), hit);
            }
        }
    }
    let mut out: Vec<GraphHit> = merged.into_values().collect();
    sort_hits(&mut out);
    out
}

/// Union of the vector-context and synonym retrievers.
pub fn graph_retrieve(
    graph: &PropertyGraph,
    query: &str,
    params: &GraphRetrieveParams,
    llm: &dyn Llm,
    embedder: &dyn Embedder,
    lookup: &dyn ChunkLookup,
    doc_filter: Option<&BTreeSet<DocId>>,
) -> Result<Vec<GraphHit>, GraphError> {
    let by_vector = vector_context_retrieve(
        graph,
        query,
        params.top_k_nodes,
        params.path_depth,
        embedder,
        lookup,
        doc_filter,
    )?;
    let by_synonym = synonym_retrieve(graph, query, params.max_synonyms, llm, lookup, doc_filter)?;
    Ok(merge_hits([by_vector, by_synonym]))
}
