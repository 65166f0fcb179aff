//! Line-delimited JSON datasets with a JSON sidecar manifest.
//!
//! One record per line:
//!
//! ```text
//! {"nodes":[[0],[1]],"edges":[[0,1,[0]]],"labels":[1,null]}
//! ```
//!
//! The manifest lives next to the data file at `<path>.manifest.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Label, Manifest};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    nodes: Vec<Vec<u32>>,
    edges: Vec<(usize, usize, Vec<u32>)>,
    labels: Vec<Option<u8>>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub(crate) fn graph_to_json(g: &LabeledGraph, labels: &[Label]) -> String {
    let record = Record {
        nodes: g.node_feats().to_vec(),
        edges: g
            .edges()
            .iter()
            .zip(g.edge_feats())
            .map(|(&(u, v), f)| (u, v, f.clone()))
            .collect(),
        labels: labels.iter().map(|l| l.map(u8::from)).collect(),
    };
    serde_json::to_string(&record).expect("record serialization cannot fail")
}

/// Parses one record. Feature widths come from the manifest so that graphs
/// without nodes or edges still get the right shape.
pub(crate) fn graph_from_json(
    line: &str,
    manifest: &Manifest,
) -> std::result::Result<(LabeledGraph, Vec<Label>), String> {
    let record: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let labels = record
        .labels
        .iter()
        .map(|l| match l {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(x) => Err(format!("label {x} is not 0, 1 or null")),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if labels.len() != manifest.num_tasks() {
        return Err(format!(
            "{} labels, manifest declares {} tasks",
            labels.len(),
            manifest.num_tasks()
        ));
    }
    let (edges, edge_feats) = record
        .edges
        .into_iter()
        .map(|(u, v, f)| ((u, v), f))
        .unzip();
    let g = LabeledGraph::new(
        manifest.node_field_cardinalities.len(),
        manifest.edge_field_cardinalities.len(),
        record.nodes,
        edges,
        edge_feats,
    )
    .map_err(|e| e.to_string())?;
    manifest.check_graph(&g).map_err(|e| e.to_string())?;
    Ok((g, labels))
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (g, row) in d.graphs().iter().zip(d.labels()) {
        writeln!(out, "{}", graph_to_json(g, row)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;

    let mpath = manifest_path(path);
    let mut text = serde_json::to_string_pretty(d.manifest())?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
        path: mpath,
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(path)?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (g, row) = graph_from_json(&line, &manifest).map_err(|msg| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        })?;
        graphs.push(g);
        labels.push(row);
    }
    Dataset::new(graphs, labels, manifest)
}
