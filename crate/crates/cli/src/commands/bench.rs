use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use clap::Args;

use gineplus::data::load_dataset;
use gineplus::nn::{param_count, ConvType, ModelConfig};
use gineplus::train::{train_model, TrainConfig};

use super::{checked, flags};
use crate::output::{num, Table};
use crate::settings::{invalid, Key, Settings};

const KEYS: &[Key] = &[
    ("data", None),
    ("layers", Some("3")),
    ("hidden", Some("100")),
    ("radii", Some("1,2,3")),
    ("epochs", Some("3")),
    ("batch-size", Some("64")),
    ("seed", Some("0")),
    ("out", Some("")),
];

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    /// GINE+ radii to time, comma-separated.
    #[arg(long)]
    radii: Option<String>,
    /// Timed epochs per configuration.
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Table path; stdout when empty.
    #[arg(long)]
    out: Option<String>,
}

pub fn run(args: BenchArgs, config: Option<&Path>) -> Result<()> {
    let s = Settings::resolve(
        "bench",
        KEYS,
        config,
        flags!(args;
            data => "data", layers => "layers", hidden => "hidden", radii => "radii",
            epochs => "epochs", batch_size => "batch-size", seed => "seed", out => "out",
        ),
    )?;
    let layers: usize = s.get("layers")?;
    let hidden: usize = s.get("hidden")?;
    let radii: Vec<usize> = s.list("radii")?;
    if radii.contains(&0) {
        return Err(invalid("radii must be >= 1"));
    }
    let tc = TrainConfig {
        epochs: s.get("epochs")?,
        batch_size: s.get("batch-size")?,
        patience: 0,
        seed: s.get("seed")?,
        replicates: 1,
        ..TrainConfig::default()
    };
    checked(tc.validate())?;

    let data = load_dataset(Path::new(s.raw("data")))?;
    let config_for = |conv, radius| ModelConfig {
        dropout: 0.0,
        ..ModelConfig::for_manifest(conv, radius, layers, hidden, data.manifest())
    };
    let base = config_for(ConvType::Gine, 1);
    checked(base.validate())?;
    let time = |cfg: &ModelConfig| -> Result<f64> {
        let start = Instant::now();
        train_model(cfg, &data, &data, &tc)?;
        Ok(start.elapsed().as_secs_f64() / tc.epochs as f64)
    };

    let base_params = param_count(&base);
    let base_time = time(&base)?;
    let mut table = Table::new(
        s.header(),
        &[
            "conv",
            "radius",
            "params",
            "param_delta",
            "expected_delta",
            "sec_per_epoch",
            "time_ratio",
        ],
    );
    table.row(&[
        "gine".to_string(),
        "1".into(),
        base_params.to_string(),
        "0".into(),
        "0".into(),
        num(base_time),
        num(1.0),
    ]);
    for &k in &radii {
        let cfg = config_for(ConvType::GinePlus, k);
        let params = param_count(&cfg);
        let secs = time(&cfg)?;
        table.row(&[
            "gine+".to_string(),
            k.to_string(),
            params.to_string(),
            (params as i64 - base_params as i64).to_string(),
            (layers * k * hidden).to_string(),
            num(secs),
            num(secs / base_time),
        ]);
    }
    table.emit(s.optional("out"))
}
