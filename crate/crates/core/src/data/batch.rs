use super::{Dataset, Label};
use crate::error::{Error, Result};
use crate::graph::{build_khop_index, LabeledGraph};

/// Disjoint union of several graphs, ready for message passing.
///
/// Each undirected edge appears as two arcs. Feature indices are stored
/// field-major so embedding lookups can gather a whole column at once.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub num_nodes: usize,
    pub num_graphs: usize,
    pub num_tasks: usize,
    /// `node_fields[f][v]`
    pub node_fields: Vec<Vec<usize>>,
    pub arc_src: Vec<usize>,
    pub arc_dst: Vec<usize>,
    /// `arc_fields[f][a]`
    pub arc_fields: Vec<Vec<usize>>,
    pub node_graph: Vec<usize>,
    pub graph_sizes: Vec<usize>,
    /// `khop_center[k - 1]`, `khop_member[k - 1]`: pairs at distance exactly `k`.
    pub khop_center: Vec<Vec<usize>>,
    pub khop_member: Vec<Vec<usize>>,
    /// Row-major `num_graphs x num_tasks`; missing entries hold 0.
    pub targets: Vec<f64>,
    /// 1 where a label is observed, 0 where missing.
    pub mask: Vec<f64>,
}

impl BatchedGraph {
    pub fn max_k(&self) -> usize {
        self.khop_center.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &d in &self.arc_dst {
            deg[d] += 1;
        }
        deg
    }

    pub fn graph_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.num_graphs);
        let mut acc = 0;
        for &s in &self.graph_sizes {
            off.push(acc);
            acc += s;
        }
        off
    }
}

/// Batches graphs (and optionally their labels), precomputing k-hop pairs
/// up to `max_k` within each graph.
pub fn collate_graphs(
    graphs: &[&LabeledGraph],
    labels: Option<&[&[Label]]>,
    num_tasks: usize,
    max_k: usize,
) -> Result<BatchedGraph> {
    let max_k = max_k.max(1);
    let (node_dim, edge_dim) = graphs
        .first()
        .map_or((0, 0), |g| (g.node_feat_dim(), g.edge_feat_dim()));
    if graphs
        .iter()
        .any(|g| g.node_feat_dim() != node_dim || g.edge_feat_dim() != edge_dim)
    {
        return Err(Error::ManifestMismatch(
            "graphs in a batch must share feature widths".into(),
        ));
    }
    if let Some(rows) = labels {
        if rows.len() != graphs.len() || rows.iter().any(|r| r.len() != num_tasks) {
            return Err(Error::Shape {
                op: "collate",
                detail: format!(
                    "labels do not match {} graphs x {num_tasks} tasks",
                    graphs.len()
                ),
            });
        }
    }

    let mut b = BatchedGraph {
        num_nodes: 0,
        num_graphs: graphs.len(),
        num_tasks,
        node_fields: vec![Vec::new(); node_dim],
        arc_src: Vec::new(),
        arc_dst: Vec::new(),
        arc_fields: vec![Vec::new(); edge_dim],
        node_graph: Vec::new(),
        graph_sizes: Vec::with_capacity(graphs.len()),
        khop_center: vec![Vec::new(); max_k],
        khop_member: vec![Vec::new(); max_k],
        targets: vec![0.0; graphs.len() * num_tasks],
        mask: vec![0.0; graphs.len() * num_tasks],
    };
    for (gi, g) in graphs.iter().enumerate() {
        let off = b.num_nodes;
        for feats in g.node_feats() {
            for (f, &x) in feats.iter().enumerate() {
                b.node_fields[f].push(x as usize);
            }
        }
        for (&(u, v), feats) in g.edges().iter().zip(g.edge_feats()) {
            for (s, d) in [(u, v), (v, u)] {
                b.arc_src.push(s + off);
                b.arc_dst.push(d + off);
                for (f, &x) in feats.iter().enumerate() {
                    b.arc_fields[f].push(x as usize);
                }
            }
        }
        if g.num_nodes() > 0 {
            let idx = build_khop_index(g, max_k)?;
            for k in 1..=max_k {
                for (c, m) in idx.pairs(k) {
                    b.khop_center[k - 1].push(c + off);
                    b.khop_member[k - 1].push(m + off);
                }
            }
        }
        b.node_graph.extend(std::iter::repeat_n(gi, g.num_nodes()));
        b.graph_sizes.push(g.num_nodes());
        b.num_nodes += g.num_nodes();
    }
    if let Some(rows) = labels {
        for (gi, row) in rows.iter().enumerate() {
            for (t, l) in row.iter().enumerate() {
                if let Some(y) = l {
                    b.targets[gi * num_tasks + t] = f64::from(u8::from(*y));
                    b.mask[gi * num_tasks + t] = 1.0;
                }
            }
        }
    }
    Ok(b)
}

/// Batches the graphs of `d` at `indices`, with labels.
pub fn collate(d: &Dataset, indices: &[usize], max_k: usize) -> Result<BatchedGraph> {
    let graphs: Vec<&LabeledGraph> = indices.iter().map(|&i| &d.graphs()[i]).collect();
    let labels: Vec<&[Label]> = indices.iter().map(|&i| d.labels()[i].as_slice()).collect();
    collate_graphs(&graphs, Some(&labels), d.num_tasks(), max_k)
}
