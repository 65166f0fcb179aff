//! Multi-task graph datasets with first-class missing labels.

mod batch;
mod io;
mod ops;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

pub use batch::{collate, collate_graphs, BatchedGraph};
pub use io::{load_dataset, manifest_path, save_dataset};
pub use ops::{combine_datasets, random_split, Split};

/// A task label: `Some(true)`, `Some(false)` or missing.
pub type Label = Option<bool>;

/// Feature cardinalities and task names shared by every graph of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub node_field_cardinalities: Vec<u32>,
    pub edge_field_cardinalities: Vec<u32>,
    pub task_names: Vec<String>,
    /// Provenance of the run that produced the file. Not part of equality
    /// checks between datasets.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub run_spec: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(node: Vec<u32>, edge: Vec<u32>, task_names: Vec<String>) -> Self {
        Self {
            node_field_cardinalities: node,
            edge_field_cardinalities: edge,
            task_names,
            run_spec: BTreeMap::new(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn same_features(&self, other: &Manifest) -> bool {
        self.node_field_cardinalities == other.node_field_cardinalities
            && self.edge_field_cardinalities == other.edge_field_cardinalities
    }

    /// Checks a graph's feature widths and values against the cardinalities.
    pub fn check_graph(&self, g: &LabeledGraph) -> Result<()> {
        let check = |kind: &str, cards: &[u32], rows: &[Vec<u32>], width: usize| {
            if width != cards.len() {
                return Err(Error::ManifestMismatch(format!(
                    "graph has {width} {kind} fields, manifest declares {}",
                    cards.len()
                )));
            }
            for row in rows {
                for (field, (&value, &card)) in row.iter().zip(cards).enumerate() {
                    if value >= card {
                        return Err(Error::ManifestMismatch(format!(
                            "{kind} field {field}: value {value} >= cardinality {card}"
                        )));
                    }
                }
            }
            Ok(())
        };
        check(
            "node",
            &self.node_field_cardinalities,
            g.node_feats(),
            g.node_feat_dim(),
        )?;
        check(
            "edge",
            &self.edge_field_cardinalities,
            g.edge_feats(),
            g.edge_feat_dim(),
        )
    }
}

/// Graphs, their task labels and the shared manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    graphs: Vec<LabeledGraph>,
    labels: Vec<Vec<Label>>,
    manifest: Manifest,
}

impl Dataset {
    pub fn new(
        graphs: Vec<LabeledGraph>,
        labels: Vec<Vec<Label>>,
        manifest: Manifest,
    ) -> Result<Self> {
        if graphs.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} graphs but {} label rows",
                graphs.len(),
                labels.len()
            )));
        }
        for (i, (g, row)) in graphs.iter().zip(&labels).enumerate() {
            if row.len() != manifest.num_tasks() {
                return Err(Error::InvalidArgument(format!(
                    "graph {i} has {} labels, expected {}",
                    row.len(),
                    manifest.num_tasks()
                )));
            }
            manifest.check_graph(g)?;
        }
        Ok(Self {
            graphs,
            labels,
            manifest,
        })
    }

    /// No graphs and no tasks, with the given feature cardinalities.
    pub fn empty(node: Vec<u32>, edge: Vec<u32>) -> Self {
        Self {
            graphs: Vec::new(),
            labels: Vec::new(),
            manifest: Manifest::new(node, edge, Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.manifest.num_tasks()
    }

    pub fn graphs(&self) -> &[LabeledGraph] {
        &self.graphs
    }

    pub fn labels(&self) -> &[Vec<Label>] {
        &self.labels
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            manifest: self.manifest.clone(),
        }
    }

    pub fn non_missing_count(&self) -> usize {
        self.labels.iter().flatten().filter(|l| l.is_some()).count()
    }

    /// Summary statistics in the layout of the usual dataset table.
    pub fn stats(&self) -> DatasetStats {
        let total = self.len() * self.num_tasks();
        let observed = self.non_missing_count();
        let positives = self
            .labels
            .iter()
            .flatten()
            .filter(|l| **l == Some(true))
            .count();
        let positive_graphs = self
            .labels
            .iter()
            .filter(|row| row.contains(&Some(true)))
            .count();
        let nodes: usize = self.graphs.iter().map(LabeledGraph::num_nodes).sum();
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        DatasetStats {
            graphs: self.len(),
            tasks: self.num_tasks(),
            avg_nodes: ratio(nodes, self.len()),
            missing_fraction: ratio(total - observed, total),
            positive_ratio: ratio(positives, observed),
            positives,
            positive_graphs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub graphs: usize,
    pub tasks: usize,
    pub avg_nodes: f64,
    pub missing_fraction: f64,
    pub positive_ratio: f64,
    pub positives: usize,
    pub positive_graphs: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_cardinality_violation() {
        let g =
            LabeledGraph::new(1, 1, vec![vec![0], vec![3]], vec![(0, 1)], vec![vec![0]]).unwrap();
        let err = Dataset::new(
            vec![g],
            vec![vec![Some(true)]],
            Manifest::new(vec![3], vec![1], vec!["t".into()]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("node field 0"), "{err}");
    }

    #[test]
    fn rejects_label_width() {
        let g = LabeledGraph::uniform(2, vec![(0, 1)]).unwrap();
        assert!(Dataset::new(
            vec![g],
            vec![vec![Some(true), None]],
            Manifest::new(vec![1], vec![1], vec!["t".into()]),
        )
        .is_err());
    }

    #[test]
    fn stats_recount() {
        let g = LabeledGraph::uniform(2, vec![(0, 1)]).unwrap();
        let d = Dataset::new(
            vec![g.clone(), g.clone(), g],
            vec![
                vec![Some(true), None],
                vec![Some(false), Some(false)],
                vec![None, Some(true)],
            ],
            Manifest::new(vec![1], vec![1], vec!["a".into(), "b".into()]),
        )
        .unwrap();
        let s = d.stats();
        assert_eq!(s.positives, 2);
        assert_eq!(s.positive_graphs, 2);
        assert!((s.missing_fraction - 2.0 / 6.0).abs() < 1e-12);
        assert!((s.positive_ratio - 0.5).abs() < 1e-12);
        assert_eq!(s.avg_nodes, 2.0);
    }
}
