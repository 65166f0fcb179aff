//! Graph convolutions and full model assembly.
//!
//! A model is: node embedding, `L` blocks of
//! `conv -> batchnorm -> relu -> dropout -> [virtual node]` (no relu in the
//! last block), global mean pooling, and a linear classifier.

mod layers;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{collate, BatchedGraph, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::tensor::{Checkpoint, Gradients, ParamStore, Tape, Tensor, Var};

pub use layers::Forward;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvType {
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "gine")]
    Gine,
    #[serde(rename = "naive-gine+")]
    NaiveGinePlus,
    #[serde(rename = "gine+")]
    GinePlus,
}

impl ConvType {
    pub const ALL: [ConvType; 4] = [
        ConvType::Gcn,
        ConvType::Gine,
        ConvType::NaiveGinePlus,
        ConvType::GinePlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvType::Gcn => "gcn",
            ConvType::Gine => "gine",
            ConvType::NaiveGinePlus => "naive-gine+",
            ConvType::GinePlus => "gine+",
        }
    }

    /// Whether the convolution aggregates beyond direct neighbours.
    pub fn uses_radius(self) -> bool {
        matches!(self, ConvType::NaiveGinePlus | ConvType::GinePlus)
    }
}

impl fmt::Display for ConvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConvType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown convolution `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv: ConvType,
    /// Convolution radius `K`; ignored by GCN and GINE.
    pub radius: usize,
    pub layers: usize,
    pub hidden: usize,
    pub virtual_node: bool,
    pub dropout: f64,
    pub task_names: Vec<String>,
    pub node_cardinalities: Vec<u32>,
    pub edge_cardinalities: Vec<u32>,
}

impl ModelConfig {
    /// Config sized for a dataset manifest.
    pub fn for_manifest(
        conv: ConvType,
        radius: usize,
        layers: usize,
        hidden: usize,
        manifest: &Manifest,
    ) -> Self {
        Self {
            conv,
            radius,
            layers,
            hidden,
            virtual_node: false,
            dropout: 0.5,
            task_names: manifest.task_names.clone(),
            node_cardinalities: manifest.node_field_cardinalities.clone(),
            edge_cardinalities: manifest.edge_field_cardinalities.clone(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    /// Radius of the k-hop index a batch must carry.
    pub fn required_k(&self) -> usize {
        if self.conv.uses_radius() {
            self.radius
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.layers == 0 {
            return bad("layers must be >= 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden width must be >= 1".into());
        }
        if self.radius == 0 {
            return bad("radius must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.task_names.is_empty() {
            return bad("model needs at least one task".into());
        }
        if self
            .node_cardinalities
            .iter()
            .chain(&self.edge_cardinalities)
            .any(|&c| c == 0)
        {
            return bad("feature cardinalities must be >= 1".into());
        }
        Ok(())
    }

    pub fn check_manifest(&self, manifest: &Manifest) -> Result<()> {
        if self.node_cardinalities != manifest.node_field_cardinalities
            || self.edge_cardinalities != manifest.edge_field_cardinalities
        {
            return Err(Error::ManifestMismatch(format!(
                "model expects node {:?} / edge {:?} cardinalities, data has {:?} / {:?}",
                self.node_cardinalities,
                self.edge_cardinalities,
                manifest.node_field_cardinalities,
                manifest.edge_field_cardinalities
            )));
        }
        Ok(())
    }
}

fn mlp_count(h: usize) -> usize {
    // lin1 (H -> 2H) + batchnorm(2H) + lin2 (2H -> H)
    (h * 2 * h + 2 * h) + 2 * (2 * h) + (2 * h * h + h)
}

/// Number of trainable scalars, batchnorm scale/shift included, running
/// statistics excluded.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let h = cfg.hidden;
    let node_emb: usize = cfg.node_cardinalities.iter().map(|&c| c as usize * h).sum();
    let edge_emb: usize = cfg.edge_cardinalities.iter().map(|&c| c as usize * h).sum();
    let conv = match cfg.conv {
        ConvType::Gcn => edge_emb + h * h + h,
        ConvType::Gine => edge_emb + h + mlp_count(h),
        ConvType::NaiveGinePlus | ConvType::GinePlus => {
            edge_emb + (cfg.radius + 1) * h + mlp_count(h)
        }
    };
    let norm = 2 * h;
    let vn = if cfg.virtual_node {
        h + mlp_count(h)
    } else {
        0
    };
    let classifier = h * cfg.num_tasks() + cfg.num_tasks();
    node_emb + cfg.layers * (conv + norm + vn) + classifier
}

/// Running mean and variance of one batchnorm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    fn new(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }
}

/// Batchnorm statistics gathered during a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsUpdate {
    pub layer: String,
    /// Rows the statistics were computed over.
    pub rows: usize,
    pub mean: Vec<f64>,
    /// Unbiased, or biased for a single row.
    pub var: Vec<f64>,
}

/// Forward-pass mode. Training draws dropout masks from `rng` and records
/// batch statistics instead of touching the model. Calibration normalises
/// with batch statistics and records them too, but applies no dropout.
pub enum Mode<'r> {
    Eval,
    Train {
        rng: &'r mut dyn RngCore,
        updates: Vec<StatsUpdate>,
    },
    Calibrate {
        updates: Vec<StatsUpdate>,
    },
}

impl<'r> Mode<'r> {
    pub fn train(rng: &'r mut dyn RngCore) -> Self {
        Mode::Train {
            rng,
            updates: Vec::new(),
        }
    }

    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    pub fn take_updates(&mut self) -> Vec<StatsUpdate> {
        match self {
            Mode::Eval => Vec::new(),
            Mode::Train { updates, .. } | Mode::Calibrate { updates } => std::mem::take(updates),
        }
    }
}

/// Parameter name to tape handle for one forward pass.
pub type ParamVars = IndexMap<String, Var>;

/// Everything a forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `h^(0) .. h^(L)`, each `n x H`.
    pub node_layers: Vec<Var>,
    /// Mean-pooled final node embeddings, `B x H`.
    pub graph_emb: Var,
    /// `B x T`.
    pub logits: Var,
}

/// Eval-mode forward results as plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub node_layers: Vec<Tensor>,
    pub graph_emb: Tensor,
    pub logits: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub stats: IndexMap<String, RunningStats>,
}

/// Mean and unbiased variance of the union of the batches behind `parts`.
fn pool_stats(parts: &[&StatsUpdate]) -> Option<RunningStats> {
    let total: usize = parts.iter().map(|u| u.rows).sum();
    let width = parts.first()?.mean.len();
    if total == 0 {
        return None;
    }
    let mut mean = vec![0.0; width];
    for u in parts {
        for (m, b) in mean.iter_mut().zip(&u.mean) {
            *m += b * u.rows as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total as f64);
    let mut var = vec![0.0; width];
    for u in parts {
        let n = u.rows as f64;
        // undo the per-batch normalisation to recover sums of squares
        let within = if u.rows > 1 { n - 1.0 } else { n };
        for ((v, (b, bm)), m) in var.iter_mut().zip(u.var.iter().zip(&u.mean)).zip(&mean) {
            *v += within * b + n * (bm - m).powi(2);
        }
    }
    let denom = if total > 1 { total as f64 - 1.0 } else { 1.0 };
    var.iter_mut().for_each(|v| *v /= denom);
    Some(RunningStats { mean, var })
}

fn uniform(rng: &mut impl Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("sized from shape")
}

struct Init<'a> {
    rng: ChaCha8Rng,
    params: &'a mut ParamStore,
    stats: &'a mut IndexMap<String, RunningStats>,
}

impl Init<'_> {
    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = uniform(&mut self.rng, vec![fan_in, fan_out], bound);
        self.params.insert(format!("{prefix}.weight"), w);
        self.params
            .insert(format!("{prefix}.bias"), Tensor::zeros(vec![fan_out]));
    }

    fn batchnorm(&mut self, prefix: &str, width: usize) {
        self.params
            .insert(format!("{prefix}.gamma"), Tensor::full(vec![width], 1.0));
        self.params
            .insert(format!("{prefix}.beta"), Tensor::zeros(vec![width]));
        self.stats
            .insert(prefix.to_string(), RunningStats::new(width));
    }

    fn mlp(&mut self, prefix: &str, h: usize) {
        self.linear(&format!("{prefix}.lin1"), h, 2 * h);
        self.batchnorm(&format!("{prefix}.bn"), 2 * h);
        self.linear(&format!("{prefix}.lin2"), 2 * h, h);
    }

    fn embeddings(&mut self, prefix: &str, cards: &[u32], h: usize) {
        for (f, &c) in cards.iter().enumerate() {
            let t = uniform(&mut self.rng, vec![c as usize, h], 0.1);
            self.params.insert(format!("{prefix}.field{f}"), t);
        }
    }
}

impl Model {
    /// Fresh parameters: linear weights uniform in `±1/sqrt(fan_in)`,
    /// embeddings uniform in `±0.1`, biases and epsilons zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut stats = IndexMap::new();
        let h = config.hidden;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: &mut params,
            stats: &mut stats,
        };
        init.embeddings("node_emb", &config.node_cardinalities, h);
        for l in 0..config.layers {
            let conv = format!("layer{l}.conv");
            init.embeddings(&format!("{conv}.edge_emb"), &config.edge_cardinalities, h);
            match config.conv {
                ConvType::Gcn => init.linear(&conv, h, h),
                ConvType::Gine => {
                    init.params
                        .insert(format!("{conv}.eps"), Tensor::zeros(vec![h]));
                    init.mlp(&format!("{conv}.mlp"), h);
                }
                ConvType::NaiveGinePlus | ConvType::GinePlus => {
                    for k in 0..=config.radius {
                        init.params
                            .insert(format!("{conv}.eps{k}"), Tensor::zeros(vec![h]));
                    }
                    init.mlp(&format!("{conv}.mlp"), h);
                }
            }
            init.batchnorm(&format!("layer{l}.norm"), h);
            if config.virtual_node {
                init.params
                    .insert(format!("layer{l}.vn.eps"), Tensor::zeros(vec![h]));
                init.mlp(&format!("layer{l}.vn.mlp"), h);
            }
        }
        init.linear("classifier", h, config.num_tasks());
        Ok(Self {
            config,
            params,
            stats,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// Registers every parameter on `tape`, in declaration order.
    pub fn bind(&self, tape: &mut Tape) -> ParamVars {
        self.params
            .iter()
            .map(|(name, t)| (name.clone(), tape.param(t.clone())))
            .collect()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        batch: &BatchedGraph,
        mode: &mut Mode<'_>,
    ) -> Result<ForwardOutput> {
        let mut fwd = Forward {
            tape,
            vars,
            stats: &self.stats,
            mode,
            config: &self.config,
        };
        fwd.model(batch)
    }

    /// Eval-mode forward on a throwaway tape.
    pub fn embed(&self, batch: &BatchedGraph) -> Result<Embeddings> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, batch, &mut Mode::Eval)?;
        Ok(Embeddings {
            node_layers: out
                .node_layers
                .iter()
                .map(|&v| tape.value(v).clone())
                .collect(),
            graph_emb: tape.value(out.graph_emb).clone(),
            logits: tape.value(out.logits).clone(),
        })
    }

    /// Gradients by parameter name; parameters the loss does not reach get zeros.
    pub fn collect_grads(&self, vars: &ParamVars, grads: &Gradients) -> IndexMap<String, Tensor> {
        self.params
            .iter()
            .map(|(name, t)| {
                let g = vars
                    .get(name)
                    .and_then(|&v| grads.get(v))
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()));
                (name.clone(), g)
            })
            .collect()
    }

    /// Folds batch statistics into the running estimates.
    pub fn apply_stats(&mut self, updates: &[StatsUpdate]) {
        for u in updates {
            if let Some(s) = self.stats.get_mut(&u.layer) {
                for (r, b) in s.mean.iter_mut().zip(&u.mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
                for (r, b) in s.var.iter_mut().zip(&u.var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
            }
        }
    }

    /// Replaces the running statistics with population statistics of `data`
    /// under the current weights, pooled over minibatches of `batch_size`.
    /// Layers that saw constant inputs get their exact zero variance back
    /// instead of a slowly decaying estimate.
    pub fn recalibrate_stats(&mut self, data: &Dataset, batch_size: usize) -> Result<()> {
        if data.is_empty() || batch_size == 0 {
            return Ok(());
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut all = Vec::new();
        for chunk in idx.chunks(batch_size) {
            let batch = collate(data, chunk, self.config.required_k())?;
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let mut mode = Mode::Calibrate {
                updates: Vec::new(),
            };
            self.forward(&mut tape, &vars, &batch, &mut mode)?;
            all.extend(mode.take_updates());
        }
        for (layer, stats) in self.stats.iter_mut() {
            let parts: Vec<&StatsUpdate> = all.iter().filter(|u| &u.layer == layer).collect();
            if let Some(pooled) = pool_stats(&parts) {
                *stats = pooled;
            }
        }
        Ok(())
    }

    /// Parameters and running statistics under the flat
    /// `layer{l}.{component}.{tensor}` naming, with the config in the metadata.
    pub fn to_checkpoint(&self, run_spec: &BTreeMap<String, String>) -> Checkpoint {
        let mut tensors: IndexMap<String, Tensor> = self
            .params
            .iter()
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect();
        for (layer, s) in &self.stats {
            let w = s.mean.len();
            tensors.insert(
                format!("{layer}.running_mean"),
                Tensor::new(vec![w], s.mean.clone()).expect("1-D"),
            );
            tensors.insert(
                format!("{layer}.running_var"),
                Tensor::new(vec![w], s.var.clone()).expect("1-D"),
            );
        }
        Checkpoint {
            meta: serde_json::json!({
                "model": self.config,
                "run_spec": run_spec,
            }),
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ckpt.meta["model"].clone())
            .map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
        let mut model = Model::init(config, 0)?;
        let expected = model.params.len() + 2 * model.stats.len();
        if ckpt.tensors.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} tensors, config implies {expected}",
                ckpt.tensors.len()
            )));
        }
        let fetch = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let t = ckpt
                .tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for (name, t) in model.params.iter_mut() {
            *t = fetch(name, t.shape())?;
        }
        for (layer, s) in model.stats.iter_mut() {
            let w = [s.mean.len()];
            s.mean = fetch(&format!("{layer}.running_mean"), &w)?.into_data();
            s.var = fetch(&format!("{layer}.running_var"), &w)?.into_data();
        }
        Ok(model)
    }
}
