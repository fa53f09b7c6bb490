//! Hierarchical navigable small-world graph over unit-normalised vectors.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnnParams;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    dist: f64,
    id: usize,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct Hnsw {
    params: AnnParams,
    dim: usize,
    unit: Vec<f32>,
    /// `links[node][layer]` lists neighbour ids.
    links: Vec<Vec<Vec<usize>>>,
    entry: usize,
    top_layer: usize,
}

fn unit_rows(data: &[f32], dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(dim) {
        let norm = row
            .iter()
            .map(|x| f64::from(*x).powi(2))
            .sum::<f64>()
            .sqrt();
        out.extend(row.iter().map(|x| {
            if norm == 0.0 {
                0.0
            } else {
                (f64::from(*x) / norm) as f32
            }
        }));
    }
    out
}

impl Hnsw {
    /// Builds the graph by inserting rows of `data` in order.
    pub fn build(data: &[f32], dim: usize, params: AnnParams) -> Self {
        let m = params.m.max(2);
        let unit = unit_rows(data, dim);
        let n = unit.len() / dim;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let level_mult = 1.0 / (m as f64).ln();
        let mut graph = Self {
            params,
            dim,
            unit,
            links: Vec::with_capacity(n),
            entry: 0,
            top_layer: 0,
        };
        for id in 0..n {
            let u: f64 = rng.random::<f64>();
            let level = (-(1.0 - u).ln() * level_mult).floor() as usize;
            graph.insert(id, level.min(16));
        }
        graph
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    fn row(&self, id: usize) -> &[f32] {
        &self.unit[id * self.dim..(id + 1) * self.dim]
    }

    fn dist_to(&self, q: &[f32], id: usize) -> f64 {
        1.0 - q
            .iter()
            .zip(self.row(id))
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum::<f64>()
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m.max(2) * 2
        } else {
            self.params.m.max(2)
        }
    }

    fn insert(&mut self, id: usize, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if id == 0 {
            self.entry = 0;
            self.top_layer = level;
            return;
        }
        let q = self.row(id).to_vec();
        let mut ep = Scored {
            dist: self.dist_to(&q, self.entry),
            id: self.entry,
        };
        for layer in (level + 1..=self.top_layer).rev() {
            ep = self.greedy(&q, ep, layer);
        }
        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.top_layer)).rev() {
            let found =
                self.search_layer(&q, &entry_points, self.params.ef_construction.max(1), layer);
            let neighbours: Vec<usize> = found
                .iter()
                .take(self.params.m.max(2))
                .map(|s| s.id)
                .collect();
            for &nb in &neighbours {
                self.links[nb][layer].push(id);
                if self.links[nb][layer].len() > self.max_links(layer) {
                    self.prune(nb, layer);
                }
            }
            self.links[id][layer] = neighbours;
            entry_points = found;
        }
        if level > self.top_layer {
            self.top_layer = level;
            self.entry = id;
        }
    }

    fn prune(&mut self, node: usize, layer: usize) {
        let q = self.row(node).to_vec();
        let mut scored: Vec<Scored> = self.links[node][layer]
            .iter()
            .map(|&id| Scored {
                dist: self.dist_to(&q, id),
                id,
            })
            .collect();
        scored.sort();
        scored.truncate(self.max_links(layer));
        self.links[node][layer] = scored.into_iter().map(|s| s.id).collect();
    }

    fn greedy(&self, q: &[f32], mut best: Scored, layer: usize) -> Scored {
        loop {
            let mut moved = false;
            for &nb in &self.links[best.id][layer] {
                let cand = Scored {
                    dist: self.dist_to(q, nb),
                    id: nb,
                };
                if cand < best {
                    best = cand;
                    moved = true;
                }
            }
            if !moved {
                return best;
            }
        }
    }

    /// Beam search on one layer; result sorted nearest first.
    fn search_layer(
        &self,
        q: &[f32],
        entry_points: &[Scored],
        ef: usize,
        layer: usize,
    ) -> Vec<Scored> {
        let mut visited: HashSet<usize> = entry_points.iter().map(|s| s.id).collect();
        let mut candidates: BinaryHeap<Reverse<Scored>> =
            entry_points.iter().copied().map(Reverse).collect();
        let mut results: BinaryHeap<Scored> = entry_points.iter().copied().collect();
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(cur)) = candidates.pop() {
            if results.len() >= ef && results.peek().is_some_and(|worst| cur.dist > worst.dist) {
                break;
            }
            for &nb in &self.links[cur.id][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Scored {
                    dist: self.dist_to(q, nb),
                    id: nb,
                };
                if results.len() < ef || results.peek().is_some_and(|worst| cand < *worst) {
                    candidates.push(Reverse(cand));
                    results.push(cand);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Approximate nearest rows to `query`, nearest first.
    pub fn search(&self, query: &[f32], k: usize) -> Vec<usize> {
        if self.links.is_empty() {
            return Vec::new();
        }
        let norm = query
            .iter()
            .map(|x| f64::from(*x).powi(2))
            .sum::<f64>()
            .sqrt();
        let q: Vec<f32> = query
            .iter()
            .map(|x| {
                if norm == 0.0 {
                    0.0
                } else {
                    (f64::from(*x) / norm) as f32
                }
            })
            .collect();
        let mut ep = Scored {
            dist: self.dist_to(&q, self.entry),
            id: self.entry,
        };
        for layer in (1..=self.top_layer).rev() {
            ep = self.greedy(&q, ep, layer);
        }
        let found = self.search_layer(&q, &[ep], self.params.ef_search.max(k), 0);
        found.into_iter().take(k).map(|s| s.id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_exact_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 8;
        let data: Vec<f32> = (0..500 * dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let h = Hnsw::build(&data, dim, AnnParams::default());
        let mut found = 0;
        for i in (0..500).step_by(10) {
            if h.search(&data[i * dim..(i + 1) * dim], 1) == [i] {
                found += 1;
            }
        }
        assert!(found >= 48, "{found}/50");
    }

    #[test]
    fn build_is_deterministic() {
        let data: Vec<f32> = (0..200 * 4)
            .map(|i| ((i * 7919) % 101) as f32 - 50.0)
            .collect();
        let a = Hnsw::build(&data, 4, AnnParams::default());
        let b = Hnsw::build(&data, 4, AnnParams::default());
        assert_eq!(a.links, b.links);
    }
}
