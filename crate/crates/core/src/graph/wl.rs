use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::LabeledGraph;

/// Per-iteration 1-WL colours of one graph. `colors[t][v]` is the colour of
/// node `v` after `t` refinement rounds; round 0 depends on features only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WlColoring {
    pub colors: Vec<Vec<usize>>,
}

impl WlColoring {
    pub fn iterations(&self) -> usize {
        self.colors.len() - 1
    }

    pub fn histogram(&self, t: usize) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for &c in &self.colors[t] {
            *hist.entry(c).or_insert(0) += 1;
        }
        hist
    }

    /// Colour classes at round `t`, each sorted, ordered by colour id.
    pub fn partition(&self, t: usize) -> Vec<Vec<usize>> {
        let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &c) in self.colors[t].iter().enumerate() {
            classes.entry(c).or_default().push(v);
        }
        classes.into_values().collect()
    }
}

type Signature = Vec<usize>;

/// One refinement round per call over a set of graphs sharing a dictionary.
/// Colour ids are the ranks of the distinct signatures in sorted order.
struct Refiner<'a> {
    graphs: &'a [&'a LabeledGraph],
    adjacency: Vec<Vec<Vec<usize>>>,
}

impl<'a> Refiner<'a> {
    fn new(graphs: &'a [&'a LabeledGraph]) -> Self {
        let adjacency = graphs.iter().map(|g| g.adjacency()).collect();
        Self { graphs, adjacency }
    }

    fn initial_signatures(&self) -> Vec<Vec<Signature>> {
        self.graphs
            .iter()
            .map(|g| {
                g.node_feats()
                    .iter()
                    .map(|f| f.iter().map(|&x| x as usize).collect())
                    .collect()
            })
            .collect()
    }

    fn refined_signatures(&self, colors: &[Vec<usize>]) -> Vec<Vec<Signature>> {
        self.adjacency
            .iter()
            .zip(colors)
            .map(|(adj, cols)| {
                adj.iter()
                    .enumerate()
                    .map(|(v, nbrs)| {
                        let mut sig = Vec::with_capacity(nbrs.len() + 1);
                        sig.push(cols[v]);
                        let start = sig.len();
                        sig.extend(nbrs.iter().map(|&u| cols[u]));
                        sig[start..].sort_unstable();
                        sig
                    })
                    .collect()
            })
            .collect()
    }

    fn intern(sigs: &[Vec<Signature>]) -> (Vec<Vec<usize>>, BTreeMap<&Signature, usize>) {
        let mut dict: BTreeMap<&Signature, usize> = BTreeMap::new();
        for s in sigs.iter().flatten() {
            dict.entry(s).or_insert(0);
        }
        for (id, slot) in dict.values_mut().enumerate() {
            *slot = id;
        }
        let colors = sigs
            .iter()
            .map(|gs| gs.iter().map(|s| dict[s]).collect())
            .collect();
        (colors, dict)
    }

    /// Runs all rounds, calling `observe` with each round's signatures and colours.
    fn run(
        &self,
        iterations: usize,
        mut observe: impl FnMut(usize, &[Vec<Signature>], &[Vec<usize>]),
    ) -> Vec<WlColoring> {
        let mut out: Vec<WlColoring> = self
            .graphs
            .iter()
            .map(|_| WlColoring { colors: Vec::new() })
            .collect();
        let mut sigs = self.initial_signatures();
        for t in 0..=iterations {
            if t > 0 {
                let prev: Vec<Vec<usize>> = out.iter().map(|c| c.colors[t - 1].clone()).collect();
                sigs = self.refined_signatures(&prev);
            }
            let (colors, _) = Self::intern(&sigs);
            observe(t, &sigs, &colors);
            for (o, c) in out.iter_mut().zip(colors) {
                o.colors.push(c);
            }
        }
        out
    }
}

/// 1-WL colour refinement of a single graph.
pub fn wl_refine(g: &LabeledGraph, iterations: usize) -> WlColoring {
    Refiner::new(&[g])
        .run(iterations, |_, _, _| {})
        .pop()
        .expect("one graph in, one colouring out")
}

/// 1-WL refinement of several graphs with a shared colour dictionary, so
/// colour ids are comparable across the returned colourings.
pub fn wl_refine_joint(graphs: &[&LabeledGraph], iterations: usize) -> Vec<WlColoring> {
    Refiner::new(graphs).run(iterations, |_, _, _| {})
}

/// Hex SHA-256 digest of the per-round signature histograms.
///
/// Each round's colours are canonical ranks of that round's signatures, so
/// two graphs get the same digest iff their colour histograms agree at every
/// round up to `iterations`.
pub fn wl_graph_hash(g: &LabeledGraph, iterations: usize) -> String {
    let mut text = String::new();
    Refiner::new(&[g]).run(iterations, |t, sigs, _| {
        let mut hist: BTreeMap<&Signature, usize> = BTreeMap::new();
        for s in &sigs[0] {
            *hist.entry(s).or_insert(0) += 1;
        }
        let _ = write!(text, "round {t}|");
        for (sig, count) in hist {
            let _ = write!(text, "{sig:?}x{count};");
        }
        text.push('\n');
    });
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
