use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;

use gineplus::data::{combine_datasets, load_dataset, random_split};
use gineplus::nn::{ConvType, ModelConfig};
use gineplus::tensor::{save_checkpoint, AdamConfig};
use gineplus::train::{
    replicate_seeds, run_one, EvalReport, Metric, ReplicateSummary, TrainConfig,
};

use super::{checked, flags};
use crate::output::{num, opt, Table};
use crate::settings::{Key, Settings};

const KEYS: &[Key] = &[
    ("data", None),
    ("aux-data", Some("")),
    ("out", None),
    ("conv", Some("gine+")),
    ("radius", Some("3")),
    ("layers", Some("3")),
    ("hidden", Some("100")),
    ("virtual-node", Some("false")),
    ("dropout", Some("0.5")),
    ("metric", Some("roc")),
    ("replicates", Some("5")),
    ("epochs", Some("100")),
    ("batch-size", Some("64")),
    ("lr", Some("0.001")),
    ("patience", Some("20")),
    ("seed", Some("0")),
    ("split", Some("0.8,0.1,0.1")),
    ("split-seed", Some("0")),
    ("recalibrate-bn", Some("true")),
];

#[derive(Args)]
pub struct TrainArgs {
    /// Primary dataset; it is split into train/valid/test.
    #[arg(long)]
    data: Option<String>,
    /// Extra training-only dataset whose tasks are appended.
    #[arg(long)]
    aux_data: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// gcn, gine, naive-gine+ or gine+.
    #[arg(long)]
    conv: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    virtual_node: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    /// roc or prc.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// Epochs without improvement before stopping; 0 trains all epochs.
    #[arg(long)]
    patience: Option<String>,
    /// Seed of the first replicate; replicate i uses seed + i.
    #[arg(long)]
    seed: Option<String>,
    /// Train,valid,test fractions.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    split_seed: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    recalibrate_bn: Option<String>,
}

pub fn run(args: TrainArgs, config: Option<&Path>) -> Result<()> {
    let s = Settings::resolve(
        "train",
        KEYS,
        config,
        flags!(args;
            data => "data", aux_data => "aux-data", out => "out", conv => "conv",
            radius => "radius", layers => "layers", hidden => "hidden",
            virtual_node => "virtual-node", dropout => "dropout", metric => "metric",
            replicates => "replicates", epochs => "epochs", batch_size => "batch-size",
            lr => "lr", patience => "patience", seed => "seed", split => "split",
            split_seed => "split-seed", recalibrate_bn => "recalibrate-bn",
        ),
    )?;
    let conv: ConvType = s.get("conv")?;
    let radius: usize = s.get("radius")?;
    let layers: usize = s.get("layers")?;
    let hidden: usize = s.get("hidden")?;
    let virtual_node: bool = s.get("virtual-node")?;
    let dropout: f64 = s.get("dropout")?;
    let fractions = s.fractions("split")?;
    let split_seed: u64 = s.get("split-seed")?;
    let tc = TrainConfig {
        epochs: s.get("epochs")?,
        batch_size: s.get("batch-size")?,
        adam: AdamConfig {
            lr: s.get("lr")?,
            ..AdamConfig::default()
        },
        patience: s.get("patience")?,
        metric: s.get::<Metric>("metric")?,
        seed: s.get("seed")?,
        replicates: s.get("replicates")?,
        recalibrate_bn: s.get("recalibrate-bn")?,
    };
    checked(tc.validate())?;
    let probe = ModelConfig {
        conv,
        radius,
        layers,
        hidden,
        virtual_node,
        dropout,
        task_names: vec!["probe".into()],
        node_cardinalities: vec![1],
        edge_cardinalities: vec![1],
    };
    checked(probe.validate())?;
    let out = PathBuf::from(s.raw("out"));

    let data = load_dataset(Path::new(s.raw("data")))?;
    let split = random_split(&data, fractions, split_seed)?;
    let train = match s.optional("aux-data") {
        Some(aux) => combine_datasets(&split.train, &load_dataset(Path::new(aux))?)?,
        None => split.train.clone(),
    };
    let manifest = train.manifest();
    let model_config = ModelConfig {
        task_names: manifest.task_names.clone(),
        node_cardinalities: manifest.node_field_cardinalities.clone(),
        edge_cardinalities: manifest.edge_field_cardinalities.clone(),
        ..probe
    };

    let runs = replicate_seeds(tc.seed, tc.replicates)
        .into_par_iter()
        .map(|seed| run_one(&model_config, &train, &split.valid, &split.test, &tc, seed))
        .collect::<gineplus::Result<Vec<_>>>()?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut history = Table::new(
        s.header(),
        &[
            "replicate",
            "seed",
            "epoch",
            "train_loss",
            "valid_loss",
            "valid_metric",
            "selected",
        ],
    );
    for (i, run) in runs.iter().enumerate() {
        let mut spec = s.map();
        spec.insert("replicate".into(), i.to_string());
        spec.insert("replicate-seed".into(), run.seed.to_string());
        spec.insert("best-epoch".into(), run.outcome.best_epoch.to_string());
        save_checkpoint(
            &out.join(format!("replicate{i}.ckpt")),
            &run.outcome.model.to_checkpoint(&spec),
        )?;
        for r in &run.outcome.history {
            history.row(&[
                i.to_string(),
                run.seed.to_string(),
                r.epoch.to_string(),
                num(r.train_loss),
                num(r.valid_loss),
                opt(r.valid_metric),
                (r.epoch == run.outcome.best_epoch).to_string(),
            ]);
        }
    }
    history.write(&out.join("history.tsv"))?;

    let mut summary = Table::new(s.header(), &["split", "task", "mean", "std", "replicates"]);
    for (name, reports) in [
        (
            "valid",
            runs.iter()
                .map(|r| r.valid.clone())
                .collect::<Vec<EvalReport>>(),
        ),
        ("test", runs.iter().map(|r| r.test.clone()).collect()),
    ] {
        let sum = ReplicateSummary::from_reports(&reports)?;
        let mut cell = |task: &str, v: Option<(f64, f64)>| {
            summary.row(&[
                name.to_string(),
                task.to_string(),
                opt(v.map(|p| p.0)),
                opt(v.map(|p| p.1)),
                sum.replicates.to_string(),
            ]);
        };
        for (task, v) in sum.task_names.iter().zip(&sum.per_task) {
            cell(task, *v);
        }
        cell("macro", sum.macro_mean);
    }
    summary.write(&out.join("summary.tsv"))?;
    summary.emit(None)
}
