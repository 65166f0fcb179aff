use super::LabeledGraph;
use crate::error::{Error, Result};

/// Two copies of `g` spliced along edge `(i, j)`.
///
/// Node `k` of `g` appears as `k` and `k + n`. The edges `(i, j)` and
/// `(i + n, j + n)` are replaced by the cross edges `(i, j + n)` and
/// `(i + n, j)`, which keep the original edge's features. Every node keeps
/// the same neighbourhood multiset as in `g`, so 1-hop message passing
/// embeds both copies of a node exactly like the original.
pub fn crossed_double_cover(g: &LabeledGraph, edge: (usize, usize)) -> Result<LabeledGraph> {
    let (i, j) = edge;
    let target = g.find_edge(i, j).ok_or(Error::EdgeNotFound(i, j))?;
    let n = g.num_nodes();

    let mut node_feats = g.node_feats().to_vec();
    node_feats.extend_from_slice(g.node_feats());

    let mut edges = Vec::with_capacity(2 * g.num_edges());
    let mut edge_feats = Vec::with_capacity(2 * g.num_edges());
    for copy in 0..2 {
        let off = copy * n;
        for (e, (&(u, v), f)) in g.edges().iter().zip(g.edge_feats()).enumerate() {
            let arc = if e == target {
                // i stays in this copy, j is taken from the other one
                (i + off, j + (n - off))
            } else {
                (u + off, v + off)
            };
            edges.push(arc);
            edge_feats.push(f.clone());
        }
    }
    LabeledGraph::new(
        g.node_feat_dim(),
        g.edge_feat_dim(),
        node_feats,
        edges,
        edge_feats,
    )
}

#[cfg(test)]
mod tests {
    use super::super::test_graphs::*;
    use super::super::{enumerate_simple_cycles, wl_refine_joint};
    use super::*;

    fn is_single_cycle(g: &LabeledGraph) -> bool {
        g.degrees().iter().all(|&d| d == 2) && g.is_connected()
    }

    #[test]
    fn splices_cycles() {
        let c12 = crossed_double_cover(&cycle(6), (0, 1)).unwrap();
        assert_eq!(c12.num_nodes(), 12);
        assert!(is_single_cycle(&c12));
        assert_eq!(enumerate_simple_cycles(&c12, 12).unwrap().len(), 1);

        let c6 = crossed_double_cover(&cycle(3), (1, 0)).unwrap();
        assert!(is_single_cycle(&c6));
        assert_eq!(c6.num_nodes(), 6);
    }

    #[test]
    fn missing_edge() {
        assert!(matches!(
            crossed_double_cover(&cycle(6), (0, 2)),
            Err(Error::EdgeNotFound(0, 2))
        ));
    }

    #[test]
    fn preserves_features_and_wl_colours() {
        let g = LabeledGraph::new(
            1,
            1,
            vec![vec![0], vec![1], vec![2], vec![1]],
            vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)],
            vec![vec![0], vec![1], vec![0], vec![1], vec![2]],
        )
        .unwrap();
        let h = crossed_double_cover(&g, (0, 2)).unwrap();
        assert_eq!(h.num_edges(), 10);
        let mut a: Vec<_> = g
            .node_feats()
            .iter()
            .chain(g.node_feats())
            .cloned()
            .collect();
        let mut b = h.node_feats().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        // cross edges carry the removed edge's label
        let cross = h.find_edge(0, 6).unwrap();
        assert_eq!(h.edge_feats()[cross], vec![2]);

        let joint = wl_refine_joint(&[&g, &h], 4);
        for t in 0..=4 {
            for k in 0..4 {
                assert_eq!(joint[0].colors[t][k], joint[1].colors[t][k]);
                assert_eq!(joint[0].colors[t][k], joint[1].colors[t][k + 4]);
            }
        }
    }

    #[test]
    fn works_on_trees() {
        let h = crossed_double_cover(&path(4), (1, 2)).unwrap();
        assert_eq!(h.num_nodes(), 8);
        assert_eq!(h.num_edges(), 6);
    }
}
