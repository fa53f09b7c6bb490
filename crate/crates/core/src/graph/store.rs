//! `graph.nodes.jsonl`, `graph.edges.jsonl` and `graph.meta.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{Edge, EntityNode, ExtractionWarning, GraphError, PropertyGraph};

pub const NODES_FILE: &str = "graph.nodes.jsonl";
pub const EDGES_FILE: &str = "graph.edges.jsonl";
pub const META_FILE: &str = "graph.meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct GraphMeta {
    max_paths_per_chunk: usize,
    node_count: usize,
    edge_count: usize,
    embed_model_id: String,
    warnings: Vec<ExtractionWarning>,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), GraphError> {
    let io = |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| GraphError::Corrupt(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, GraphError> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| GraphError::Corrupt(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

impl PropertyGraph {
    pub fn save(&self, dir: &Path) -> Result<(), GraphError> {
        fs::create_dir_all(dir).map_err(|source| GraphError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_rows(&dir.join(NODES_FILE), self.nodes())?;
        write_rows(&dir.join(EDGES_FILE), self.edges())?;
        let meta = GraphMeta {
            max_paths_per_chunk: self.max_paths_per_chunk(),
            node_count: self.nodes().len(),
            edge_count: self.edges().len(),
            embed_model_id: self.embed_model_id().to_string(),
            warnings: self.warnings().to_vec(),
        };
        let path = dir.join(META_FILE);
        let json =
            serde_json::to_string_pretty(&meta).map_err(|e| GraphError::Corrupt(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|source| GraphError::Io { path, source })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(META_FILE).exists()
    }

    /// Loads and re-validates a saved graph.
    pub fn load(dir: &Path) -> Result<Self, GraphError> {
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|source| GraphError::Io {
            path: path.clone(),
            source,
        })?;
        let meta: GraphMeta = serde_json::from_str(&text)
            .map_err(|e| GraphError::Corrupt(format!("{META_FILE}: {e}")))?;
        let nodes: Vec<EntityNode> = read_rows(&dir.join(NODES_FILE))?;
        let edges: Vec<Edge> = read_rows(&dir.join(EDGES_FILE))?;
        if nodes.len() != meta.node_count || edges.len() != meta.edge_count {
            return Err(GraphError::Corrupt(
                "row counts disagree with graph.meta.json".into(),
            ));
        }
        Self::from_parts(
            nodes,
            edges,
            meta.max_paths_per_chunk,
            meta.embed_model_id,
            meta.warnings,
        )
    }
}
