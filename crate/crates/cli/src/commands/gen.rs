use std::path::Path;

use anyhow::Result;
use clap::Args;

use gineplus::data::save_dataset;
use gineplus::graph::{gen_synthetic_dataset, SynthTask};

use super::flags;
use crate::output::{num, Table};
use crate::settings::{invalid, Key, Settings};

const KEYS: &[Key] = &[
    ("task", Some("min-cycle-class")),
    ("size", Some("600")),
    ("seed", Some("0")),
    ("out", None),
];

#[derive(Args)]
pub struct GenArgs {
    /// min-cycle-class, has-small-cycle or random-multitask.
    #[arg(long)]
    task: Option<String>,
    /// Number of graphs.
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Dataset path; the manifest goes next to it.
    #[arg(long)]
    out: Option<String>,
}

pub fn run(args: GenArgs, config: Option<&Path>) -> Result<()> {
    let s = Settings::resolve(
        "gen",
        KEYS,
        config,
        flags!(args; task => "task", size => "size", seed => "seed", out => "out"),
    )?;
    let task: SynthTask = s.get("task")?;
    let size: usize = s.get("size")?;
    let seed: u64 = s.get("seed")?;
    if size == 0 {
        return Err(invalid("size must be >= 1"));
    }

    let mut data = gen_synthetic_dataset(task, size, seed)?;
    data.manifest_mut().run_spec = s.map();
    save_dataset(&data, Path::new(s.raw("out")))?;

    let st = data.stats();
    let mut table = Table::new(
        s.header(),
        &[
            "graphs",
            "tasks",
            "avg_nodes",
            "positive_ratio",
            "missing_fraction",
        ],
    );
    table.row(&[
        st.graphs.to_string(),
        st.tasks.to_string(),
        num(st.avg_nodes),
        num(st.positive_ratio),
        num(st.missing_fraction),
    ]);
    table.emit(None)
}
