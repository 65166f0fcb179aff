//! Labelled undirected graphs and the structural oracles built on them.

mod counterexample;
mod cycles;
pub mod synth;
mod wl;

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use counterexample::crossed_double_cover;
pub use cycles::{enumerate_simple_cycles, girth};
pub use synth::{gen_cycle_union, gen_synthetic_dataset, SynthTask};
pub use wl::{wl_graph_hash, wl_refine, wl_refine_joint, WlColoring};

/// Undirected graph with categorical node and edge features.
///
/// Each undirected edge is stored once; `edge_feats[e]` belongs to
/// `edges[e]`. Self-loops and parallel edges are rejected at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledGraph {
    num_nodes: usize,
    node_feat_dim: usize,
    edge_feat_dim: usize,
    node_feats: Vec<Vec<u32>>,
    edges: Vec<(usize, usize)>,
    edge_feats: Vec<Vec<u32>>,
}

impl LabeledGraph {
    pub fn new(
        node_feat_dim: usize,
        edge_feat_dim: usize,
        node_feats: Vec<Vec<u32>>,
        edges: Vec<(usize, usize)>,
        edge_feats: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let num_nodes = node_feats.len();
        if let Some((i, f)) = node_feats
            .iter()
            .enumerate()
            .find(|(_, f)| f.len() != node_feat_dim)
        {
            return Err(Error::InvalidGraph(format!(
                "node {i} has {} features, expected {node_feat_dim}",
                f.len()
            )));
        }
        if edges.len() != edge_feats.len() {
            return Err(Error::InvalidGraph(format!(
                "{} edges but {} edge feature vectors",
                edges.len(),
                edge_feats.len()
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for (e, (&(u, v), f)) in edges.iter().zip(&edge_feats).enumerate() {
            for node in [u, v] {
                if node >= num_nodes {
                    return Err(Error::NodeOutOfRange { node, num_nodes });
                }
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
            if f.len() != edge_feat_dim {
                return Err(Error::InvalidGraph(format!(
                    "edge {e} has {} features, expected {edge_feat_dim}",
                    f.len()
                )));
            }
        }
        Ok(Self {
            num_nodes,
            node_feat_dim,
            edge_feat_dim,
            node_feats,
            edges,
            edge_feats,
        })
    }

    /// Graph whose node and edge features are all zero, one field each.
    pub fn uniform(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::uniform_with_dims(num_nodes, edges, 1, 1)
    }

    pub fn uniform_with_dims(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        node_feat_dim: usize,
        edge_feat_dim: usize,
    ) -> Result<Self> {
        let m = edges.len();
        Self::new(
            node_feat_dim,
            edge_feat_dim,
            vec![vec![0; node_feat_dim]; num_nodes],
            edges,
            vec![vec![0; edge_feat_dim]; m],
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_feat_dim(&self) -> usize {
        self.node_feat_dim
    }

    pub fn edge_feat_dim(&self) -> usize {
        self.edge_feat_dim
    }

    pub fn node_feats(&self) -> &[Vec<u32>] {
        &self.node_feats
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_feats(&self) -> &[Vec<u32>] {
        &self.edge_feats
    }

    pub fn set_node_feats(&mut self, node: usize, feats: Vec<u32>) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes,
            });
        }
        if feats.len() != self.node_feat_dim {
            return Err(Error::InvalidGraph(format!(
                "expected {} node features, got {}",
                self.node_feat_dim,
                feats.len()
            )));
        }
        self.node_feats[node] = feats;
        Ok(())
    }

    /// Index of the undirected edge `{u, v}`, if present.
    pub fn find_edge(&self, u: usize, v: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|&(a, b)| (a == u && b == v) || (a == v && b == u))
    }

    /// Sorted adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Renames node `i` to `perm[i]`, carrying features along.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        let mut check = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut check[p], true))
        {
            return Err(Error::InvalidArgument("relabel: not a permutation".into()));
        }
        let mut node_feats = vec![Vec::new(); n];
        for (i, f) in self.node_feats.iter().enumerate() {
            node_feats[perm[i]] = f.clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        Self::new(
            self.node_feat_dim,
            self.edge_feat_dim,
            node_feats,
            edges,
            self.edge_feats.clone(),
        )
    }

    /// Disjoint union, `other`'s nodes shifted by `self.num_nodes()`.
    pub fn disjoint_union(&self, other: &Self) -> Result<Self> {
        if self.node_feat_dim != other.node_feat_dim || self.edge_feat_dim != other.edge_feat_dim {
            return Err(Error::InvalidGraph(
                "disjoint union of graphs with different feature widths".into(),
            ));
        }
        let off = self.num_nodes;
        let mut node_feats = self.node_feats.clone();
        node_feats.extend(other.node_feats.iter().cloned());
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(u, v)| (u + off, v + off)));
        let mut edge_feats = self.edge_feats.clone();
        edge_feats.extend(other.edge_feats.iter().cloned());
        Self::new(
            self.node_feat_dim,
            self.edge_feat_dim,
            node_feats,
            edges,
            edge_feats,
        )
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        bfs_from(&self.adjacency(), 0, usize::MAX)
            .iter()
            .all(|d| d.is_finite())
    }
}

/// Shortest-path distance, with an explicit marker for unreachable nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(usize),
    Unreachable,
}

impl Distance {
    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unreachable => None,
        }
    }
}

/// BFS from `source`, exploring no further than `limit` hops.
fn bfs_from(adj: &[Vec<usize>], source: usize, limit: usize) -> Vec<Distance> {
    let mut dist = vec![Distance::Unreachable; adj.len()];
    dist[source] = Distance::Finite(0);
    let mut queue = VecDeque::from([(source, 0usize)]);
    while let Some((u, d)) = queue.pop_front() {
        if d == limit {
            continue;
        }
        for &v in &adj[u] {
            if dist[v] == Distance::Unreachable {
                dist[v] = Distance::Finite(d + 1);
                queue.push_back((v, d + 1));
            }
        }
    }
    dist
}

pub fn bfs_distances(g: &LabeledGraph, source: usize) -> Result<Vec<Distance>> {
    if source >= g.num_nodes() {
        return Err(Error::NodeOutOfRange {
            node: source,
            num_nodes: g.num_nodes(),
        });
    }
    Ok(bfs_from(&g.adjacency(), source, usize::MAX))
}

/// For every node `i` and every `k` in `1..=max_k`, the sorted set of nodes
/// at shortest-path distance exactly `k` from `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KHopIndex {
    max_k: usize,
    // rings[i][k - 1]
    rings: Vec<Vec<Vec<usize>>>,
}

impl KHopIndex {
    pub fn max_k(&self) -> usize {
        self.max_k
    }

    pub fn num_nodes(&self) -> usize {
        self.rings.len()
    }

    /// Nodes at distance exactly `k` from `node`. Empty for `k > max_k` or `k == 0`.
    pub fn ring(&self, node: usize, k: usize) -> &[usize] {
        if k == 0 || k > self.max_k {
            return &[];
        }
        &self.rings[node][k - 1]
    }

    /// All `(center, member)` pairs at distance `k`, ordered by center.
    pub fn pairs(&self, k: usize) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .flat_map(|i| self.ring(i, k).iter().map(move |&j| (i, j)))
            .collect()
    }
}

pub fn build_khop_index(g: &LabeledGraph, max_k: usize) -> Result<KHopIndex> {
    if max_k == 0 {
        return Err(Error::InvalidArgument(
            "k-hop index needs max_k >= 1".into(),
        ));
    }
    let adj = g.adjacency();
    let rings = (0..g.num_nodes())
        .map(|i| {
            let mut rings = vec![Vec::new(); max_k];
            for (j, d) in bfs_from(&adj, i, max_k).into_iter().enumerate() {
                if let Distance::Finite(d) = d {
                    if d >= 1 {
                        rings[d - 1].push(j);
                    }
                }
            }
            rings
        })
        .collect();
    Ok(KHopIndex { max_k, rings })
}
