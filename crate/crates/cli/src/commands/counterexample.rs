use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;

use gineplus::data::{collate_graphs, load_dataset, save_dataset, Dataset, Manifest};
use gineplus::graph::{crossed_double_cover, wl_graph_hash, LabeledGraph};
use gineplus::nn::{ConvType, Embeddings, Model, ModelConfig};

use super::{checked, flags};
use crate::output::{num, Table};
use crate::settings::{invalid, Key, Settings};

const KEYS: &[Key] = &[
    ("graph", None),
    ("index", Some("0")),
    ("edge", None),
    ("out-dir", None),
    ("seed", Some("0")),
    ("layers", Some("3")),
    ("hidden", Some("32")),
    ("radius", Some("3")),
];

#[derive(Args)]
pub struct CounterexampleArgs {
    /// Dataset file, or `cycle:N` / `path:N`.
    #[arg(long)]
    graph: Option<String>,
    /// Record of the dataset file to use.
    #[arg(long)]
    index: Option<String>,
    /// Edge to cross, as `u,v`.
    #[arg(long)]
    edge: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Weight seed of the random models.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    /// GINE+ radius.
    #[arg(long)]
    radius: Option<String>,
}

enum Source {
    Cycle(usize),
    Path(usize),
    File(PathBuf),
}

fn parse_source(raw: &str) -> Result<Source> {
    let size = |n: &str, min: usize| -> Result<usize> {
        n.parse::<usize>()
            .ok()
            .filter(|&n| n >= min)
            .ok_or_else(|| invalid(format!("`{raw}`: size must be an integer >= {min}")))
    };
    Ok(match raw.split_once(':') {
        Some(("cycle", n)) => Source::Cycle(size(n, 3)?),
        Some(("path", n)) => Source::Path(size(n, 2)?),
        _ => Source::File(PathBuf::from(raw)),
    })
}

/// Per-field cardinalities implied by the features actually present.
fn observed_cardinalities(rows: &[Vec<u32>], width: usize) -> Vec<u32> {
    (0..width)
        .map(|j| rows.iter().map(|r| r[j] + 1).max().unwrap_or(1))
        .collect()
}

fn embed(model: &Model, g: &LabeledGraph) -> Result<Embeddings> {
    let batch = collate_graphs(
        &[g],
        None,
        model.config.num_tasks(),
        model.config.required_k(),
    )?;
    Ok(model.embed(&batch)?)
}

/// Largest gap between a node of `g` and either of its copies in the cover.
fn node_gap(a: &Embeddings, b: &Embeddings, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for (la, lb) in a.node_layers.iter().zip(&b.node_layers) {
        for k in 0..n {
            for copy in [k, k + n] {
                let gap = la
                    .row(k)
                    .iter()
                    .zip(lb.row(copy))
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(gap);
            }
        }
    }
    worst
}

fn save_single(g: &LabeledGraph, manifest: &Manifest, path: &Path) -> Result<()> {
    let data = Dataset::new(vec![g.clone()], vec![Vec::new()], manifest.clone())?;
    Ok(save_dataset(&data, path)?)
}

pub fn run(args: CounterexampleArgs, config: Option<&Path>) -> Result<()> {
    let s = Settings::resolve(
        "counterexample",
        KEYS,
        config,
        flags!(args;
            graph => "graph", index => "index", edge => "edge", out_dir => "out-dir",
            seed => "seed", layers => "layers", hidden => "hidden", radius => "radius",
        ),
    )?;
    let source = parse_source(s.raw("graph"))?;
    let index: usize = s.get("index")?;
    let edge = match s.list::<usize>("edge")?[..] {
        [u, v] => (u, v),
        _ => return Err(invalid("`edge` must be `u,v`")),
    };
    let seed: u64 = s.get("seed")?;
    let probe = ModelConfig {
        conv: ConvType::GinePlus,
        radius: s.get("radius")?,
        layers: s.get("layers")?,
        hidden: s.get("hidden")?,
        virtual_node: false,
        dropout: 0.0,
        task_names: vec!["probe".into()],
        node_cardinalities: vec![1],
        edge_cardinalities: vec![1],
    };
    checked(probe.validate())?;
    let out_dir = PathBuf::from(s.raw("out-dir"));

    let (g, manifest) = match source {
        Source::Cycle(n) => (
            LabeledGraph::uniform(n, (0..n).map(|i| (i, (i + 1) % n)).collect())?,
            None,
        ),
        Source::Path(n) => (
            LabeledGraph::uniform(n, (1..n).map(|i| (i - 1, i)).collect())?,
            None,
        ),
        Source::File(path) => {
            let data = load_dataset(&path)?;
            let g = data.graphs().get(index).cloned().ok_or_else(|| {
                gineplus::Error::IndexOutOfRange {
                    what: format!("graphs of {}", path.display()),
                    index,
                    bound: data.len(),
                }
            })?;
            (g, Some(data.manifest().clone()))
        }
    };
    let manifest = manifest.unwrap_or_else(|| {
        Manifest::new(
            observed_cardinalities(g.node_feats(), g.node_feat_dim()),
            observed_cardinalities(g.edge_feats(), g.edge_feat_dim()),
            Vec::new(),
        )
    });
    let manifest = Manifest {
        task_names: Vec::new(),
        run_spec: s.map(),
        ..manifest
    };
    let cover = crossed_double_cover(&g, edge)?;

    let model_for = |conv: ConvType| -> Result<Model> {
        let cfg = ModelConfig {
            conv,
            node_cardinalities: manifest.node_field_cardinalities.clone(),
            edge_cardinalities: manifest.edge_field_cardinalities.clone(),
            ..probe.clone()
        };
        Ok(Model::init(cfg, seed)?)
    };
    let n = g.num_nodes();
    let mut table = Table::new(s.header(), &["measure", "conv", "value", "expectation"]);
    table.row(&[
        "nodes",
        "-",
        &cover.num_nodes().to_string(),
        &format!("== {}", 2 * n),
    ]);
    for conv in [ConvType::Gine, ConvType::Gcn] {
        let model = model_for(conv)?;
        let (a, b) = (embed(&model, &g)?, embed(&model, &cover)?);
        table.row(&[
            "max_node_discrepancy",
            conv.name(),
            &num(node_gap(&a, &b, n)),
            "< 1e-5",
        ]);
        table.row(&[
            "graph_discrepancy",
            conv.name(),
            &num(a.graph_emb.max_abs_diff(&b.graph_emb)),
            "< 1e-5",
        ]);
    }
    let plus = model_for(ConvType::GinePlus)?;
    let (a, b) = (embed(&plus, &g)?, embed(&plus, &cover)?);
    table.row(&[
        "graph_discrepancy",
        &format!("gine+ K={}", probe.radius),
        &num(a.graph_emb.max_abs_diff(&b.graph_emb)),
        "> 1e-3 when a cycle is shorter than 2K",
    ]);
    let twice = g.disjoint_union(&g)?;
    let rounds = cover.num_nodes();
    let same_wl = wl_graph_hash(&twice, rounds) == wl_graph_hash(&cover, rounds);
    table.row(&[
        "wl_hash_equal_to_two_copies",
        "-",
        &same_wl.to_string(),
        "true",
    ]);

    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    save_single(&g, &manifest, &out_dir.join("original.jsonl"))?;
    save_single(&cover, &manifest, &out_dir.join("cover.jsonl"))?;
    table.write(&out_dir.join("report.tsv"))?;
    table.emit(None)
}
