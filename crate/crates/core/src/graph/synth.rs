//! Synthetic graphs and labelled datasets for cycle-detection experiments.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledGraph;
use crate::data::{Dataset, Manifest};
use crate::error::{Error, Result};

/// Disjoint union of simple cycles with all-zero features.
pub fn gen_cycle_union(
    cycle_lengths: &[usize],
    node_feat_dim: usize,
    edge_feat_dim: usize,
) -> Result<LabeledGraph> {
    let mut edges = Vec::new();
    let mut offset = 0;
    for &len in cycle_lengths {
        if len < 3 {
            return Err(Error::InvalidArgument(format!(
                "cycle length must be >= 3, got {len}"
            )));
        }
        edges.extend((0..len).map(|i| (offset + i, offset + (i + 1) % len)));
        offset += len;
    }
    LabeledGraph::uniform_with_dims(offset, edges, node_feat_dim, edge_feat_dim)
}

/// Built-in synthetic tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTask {
    /// 12-node 2-regular graphs, one-vs-rest on the smallest cycle length (3, 4 or 6).
    MinCycleClass,
    /// Random trees (label 0) vs unicyclic graphs with a cycle of length 3..=6 (label 1).
    HasSmallCycle,
    /// Random featured graphs with sparse, partly missing labels.
    RandomMultitask,
}

impl SynthTask {
    pub const ALL: [SynthTask; 3] = [
        SynthTask::MinCycleClass,
        SynthTask::HasSmallCycle,
        SynthTask::RandomMultitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthTask::MinCycleClass => "min-cycle-class",
            SynthTask::HasSmallCycle => "has-small-cycle",
            SynthTask::RandomMultitask => "random-multitask",
        }
    }
}

impl fmt::Display for SynthTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

pub const MIN_CYCLE_CLASSES: [usize; 3] = [3, 4, 6];
pub const MIN_CYCLE_NODES: usize = 12;

/// Partitions of 12 into cycle lengths, grouped by their smallest part.
fn min_cycle_partitions(min: usize) -> &'static [&'static [usize]] {
    match min {
        3 => &[&[3, 9], &[3, 3, 6], &[3, 4, 5], &[3, 3, 3, 3]],
        4 => &[&[4, 8], &[4, 4, 4]],
        6 => &[&[6, 6]],
        _ => &[],
    }
}

/// Random node order so that structure cannot be read off node ids.
fn shuffled(g: LabeledGraph, rng: &mut impl Rng) -> LabeledGraph {
    let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
    perm.shuffle(rng);
    g.relabel(&perm).expect("shuffle yields a permutation")
}

/// Random recursive tree on `n` nodes.
fn random_tree_edges(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    (1..n).map(|v| (rng.gen_range(0..v), v)).collect()
}

fn gen_min_cycle_class(size: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    // class shares 5:3:2 so the majority class is unambiguous in any split
    let n3 = size * 5 / 10;
    let n4 = size * 3 / 10;
    let mut classes: Vec<usize> = std::iter::repeat_n(3, n3)
        .chain(std::iter::repeat_n(4, n4))
        .chain(std::iter::repeat_n(6, size - n3 - n4))
        .collect();
    classes.shuffle(rng);

    let mut graphs = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for class in classes {
        let options = min_cycle_partitions(class);
        let mut parts = options[rng.gen_range(0..options.len())].to_vec();
        parts.shuffle(rng);
        graphs.push(shuffled(gen_cycle_union(&parts, 1, 1)?, rng));
        labels.push(
            MIN_CYCLE_CLASSES
                .iter()
                .map(|&c| Some(c == class))
                .collect(),
        );
    }
    let manifest = Manifest::new(
        vec![1],
        vec![1],
        MIN_CYCLE_CLASSES
            .iter()
            .map(|c| format!("min_cycle_{c}"))
            .collect(),
    );
    Dataset::new(graphs, labels, manifest)
}

fn gen_has_small_cycle(size: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut graphs = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let n = rng.gen_range(8..=16);
        let cyclic = rng.gen_bool(0.5);
        let edges = if cyclic {
            let len = rng.gen_range(3..=6);
            let mut edges: Vec<_> = (0..len).map(|i| (i, (i + 1) % len)).collect();
            edges.extend((len..n).map(|v| (rng.gen_range(0..v), v)));
            edges
        } else {
            random_tree_edges(n, rng)
        };
        graphs.push(shuffled(LabeledGraph::uniform(n, edges)?, rng));
        labels.push(vec![Some(cyclic)]);
    }
    Dataset::new(
        graphs,
        labels,
        Manifest::new(vec![1], vec![1], vec!["has_small_cycle".into()]),
    )
}

const MULTITASK_NODE_CARD: [u32; 2] = [5, 3];
const MULTITASK_EDGE_CARD: [u32; 1] = [4];
const MULTITASK_TASKS: usize = 4;

fn gen_random_multitask(size: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut graphs = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let n = rng.gen_range(4..=14);
        let mut edges = random_tree_edges(n, rng);
        for _ in 0..rng.gen_range(0..=2) {
            let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if u != v
                && !edges
                    .iter()
                    .any(|&(a, b)| (a, b) == (u, v) || (a, b) == (v, u))
            {
                edges.push((u, v));
            }
        }
        let node_feats: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                MULTITASK_NODE_CARD
                    .iter()
                    .map(|&c| rng.gen_range(0..c))
                    .collect()
            })
            .collect();
        let edge_feats = edges
            .iter()
            .map(|_| vec![rng.gen_range(0..MULTITASK_EDGE_CARD[0])])
            .collect();
        // weak signal: task t fires when at least three nodes carry atom type t
        let row = (0..MULTITASK_TASKS)
            .map(|t| {
                if rng.gen_bool(0.4) {
                    return None;
                }
                let hits = node_feats.iter().filter(|f| f[0] == t as u32).count();
                Some((hits >= 3) ^ rng.gen_bool(0.1))
            })
            .collect();
        graphs.push(LabeledGraph::new(2, 1, node_feats, edges, edge_feats)?);
        labels.push(row);
    }
    Dataset::new(
        graphs,
        labels,
        Manifest::new(
            MULTITASK_NODE_CARD.to_vec(),
            MULTITASK_EDGE_CARD.to_vec(),
            (0..MULTITASK_TASKS).map(|t| format!("task_{t}")).collect(),
        ),
    )
}

/// Deterministic synthetic dataset for `task` with `size` graphs.
pub fn gen_synthetic_dataset(task: SynthTask, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task {
        SynthTask::MinCycleClass => gen_min_cycle_class(size, &mut rng),
        SynthTask::HasSmallCycle => gen_has_small_cycle(size, &mut rng),
        SynthTask::RandomMultitask => gen_random_multitask(size, &mut rng),
    }
}
