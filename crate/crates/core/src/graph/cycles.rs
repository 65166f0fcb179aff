use super::LabeledGraph;
use crate::error::{Error, Result};

/// All simple cycles of length `3..=max_len`.
///
/// Each cycle is reported once, as a node sequence rotated so its smallest
/// node comes first and oriented so that the second node is smaller than the
/// last. The output is sorted.
pub fn enumerate_simple_cycles(g: &LabeledGraph, max_len: usize) -> Result<Vec<Vec<usize>>> {
    if max_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "cycle length bound must be >= 3, got {max_len}"
        )));
    }
    let adj = g.adjacency();
    let mut on_path = vec![false; g.num_nodes()];
    let mut path = Vec::with_capacity(max_len);
    let mut out = Vec::new();
    for start in 0..g.num_nodes() {
        path.push(start);
        on_path[start] = true;
        extend(&adj, start, max_len, &mut path, &mut on_path, &mut out);
        on_path[start] = false;
        path.pop();
    }
    out.sort();
    Ok(out)
}

fn extend(
    adj: &[Vec<usize>],
    start: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    let tail = *path.last().expect("path starts non-empty");
    for &v in &adj[tail] {
        if v == start {
            if path.len() >= 3 && path[1] < path[path.len() - 1] {
                out.push(path.clone());
            }
        } else if v > start && !on_path[v] && path.len() < max_len {
            on_path[v] = true;
            path.push(v);
            extend(adj, start, max_len, path, on_path, out);
            path.pop();
            on_path[v] = false;
        }
    }
}

/// Length of the shortest cycle, if the graph has one.
pub fn girth(g: &LabeledGraph) -> Option<usize> {
    let max_len = g.num_nodes().max(3);
    enumerate_simple_cycles(g, max_len)
        .expect("bound is at least 3")
        .iter()
        .map(Vec::len)
        .min()
}
