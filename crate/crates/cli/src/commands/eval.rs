use std::path::Path;

use anyhow::Result;
use clap::Args;

use gineplus::data::{load_dataset, random_split};
use gineplus::nn::Model;
use gineplus::tensor::load_checkpoint;
use gineplus::train::{class_accuracy, evaluate, Metric};

use super::flags;
use crate::output::{num, opt, Table};
use crate::settings::{invalid, Key, Settings};

const KEYS: &[Key] = &[
    ("checkpoint", None),
    ("data", None),
    ("metric", Some("roc")),
    ("subset", Some("all")),
    ("split", Some("0.8,0.1,0.1")),
    ("split-seed", Some("0")),
    ("out", Some("")),
];

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    data: Option<String>,
    /// roc or prc.
    #[arg(long)]
    metric: Option<String>,
    /// all, train, valid or test; the split is recomputed from `split` and `split-seed`.
    #[arg(long)]
    subset: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    split_seed: Option<String>,
    /// Report path; stdout when empty.
    #[arg(long)]
    out: Option<String>,
}

pub fn run(args: EvalArgs, config: Option<&Path>) -> Result<()> {
    let s = Settings::resolve(
        "eval",
        KEYS,
        config,
        flags!(args;
            checkpoint => "checkpoint", data => "data", metric => "metric", subset => "subset",
            split => "split", split_seed => "split-seed", out => "out",
        ),
    )?;
    let metric: Metric = s.get("metric")?;
    let fractions = s.fractions("split")?;
    let split_seed: u64 = s.get("split-seed")?;
    let subset = s.raw("subset");
    if !["all", "train", "valid", "test"].contains(&subset) {
        return Err(invalid(format!(
            "unknown subset `{subset}`; expected all, train, valid or test"
        )));
    }

    let ckpt = load_checkpoint(Path::new(s.raw("checkpoint")))?;
    let model = Model::from_checkpoint(&ckpt)?;
    let data = load_dataset(Path::new(s.raw("data")))?;
    model.config.check_manifest(data.manifest())?;
    let data = match subset {
        "all" => data,
        part => {
            let split = random_split(&data, fractions, split_seed)?;
            match part {
                "train" => split.train,
                "valid" => split.valid,
                _ => split.test,
            }
        }
    };

    let report = evaluate(&model, &data, metric)?;
    let mut header = s.header();
    if let Some(spec) = ckpt.meta["run_spec"].as_object() {
        for (k, v) in spec {
            header.push_str(&format!(
                "# checkpoint.{k}={}\n",
                v.as_str().unwrap_or_default()
            ));
        }
    }
    let mut table = Table::new(header, &["kind", "name", "value"]);
    for (task, v) in report.task_names.iter().zip(&report.per_task) {
        table.row(&[format!("task-{metric}"), task.clone(), opt(*v)]);
    }
    table.row(&[
        format!("macro-{metric}"),
        "-".into(),
        opt(report.macro_mean),
    ]);
    table.row(&["loss".to_string(), "-".into(), num(report.loss)]);
    if let Some(acc) = class_accuracy(&model, &data)? {
        table.row(&["class-accuracy".to_string(), "-".into(), num(acc)]);
    }
    table.emit(s.optional("out"))
}
