//! Training loop, evaluation and replicate aggregation.

mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{collate, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Mode, Model, ModelConfig};
use crate::tensor::{adam_step, AdamConfig, OptimizerState, Tape, Tensor};

pub use metrics::{mean_std, prc_auc, roc_auc, Metric};

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping and keeps the last epoch.
    pub patience: usize,
    pub metric: Metric,
    pub seed: u64,
    pub replicates: usize,
    /// Re-estimate batchnorm statistics on the training split after every
    /// epoch instead of relying on the running averages alone.
    pub recalibrate_bn: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            patience: 20,
            metric: Metric::RocAuc,
            seed: 0,
            replicates: 5,
            recalibrate_bn: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Per-task metric values on one dataset. Tasks lacking a positive (or,
/// for ROC, a negative) are `None` and left out of the macro mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub task_names: Vec<String>,
    pub per_task: Vec<Option<f64>>,
    pub macro_mean: Option<f64>,
    /// Mean masked BCE over observed labels; 0 when nothing is observed.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the selected epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Eval-mode logits for every graph of `data`, `len x T_model`.
pub fn predict(model: &Model, data: &Dataset) -> Result<Tensor> {
    model.config.check_manifest(data.manifest())?;
    let t = model.config.num_tasks();
    let mut out = Vec::with_capacity(data.len() * t);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let batch = collate(data, chunk, model.config.required_k())?;
        out.extend_from_slice(model.embed(&batch)?.logits.data());
    }
    Tensor::new(vec![data.len(), t], out)
}

/// Model output column of each of `data`'s tasks, matched by name.
fn task_columns(config: &ModelConfig, data: &Dataset) -> Result<Vec<usize>> {
    data.manifest()
        .task_names
        .iter()
        .map(|name| {
            config
                .task_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    Error::ManifestMismatch(format!("model has no output for task `{name}`"))
                })
        })
        .collect()
}

/// Scores `data`'s tasks in eval mode. Model outputs are matched to tasks by
/// name, so a model trained on extra tasks can be evaluated on a subset.
pub fn evaluate(model: &Model, data: &Dataset, metric: Metric) -> Result<EvalReport> {
    let cols = task_columns(&model.config, data)?;
    let logits = predict(model, data)?;
    let tm = model.config.num_tasks();
    let td = cols.len();
    let mut picked = Vec::with_capacity(data.len() * td);
    let mut targets = Vec::with_capacity(data.len() * td);
    let mut mask = Vec::with_capacity(data.len() * td);
    for (g, row) in data.labels().iter().enumerate() {
        for (l, &c) in row.iter().zip(&cols) {
            picked.push(logits.data()[g * tm + c]);
            targets.push(if *l == Some(true) { 1.0 } else { 0.0 });
            mask.push(if l.is_some() { 1.0 } else { 0.0 });
        }
    }
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::new(vec![data.len(), td], picked.clone())?);
    let loss_var = tape.bce_with_logits_masked(z, targets, mask)?;
    let loss = tape.value(loss_var).data()[0];

    let per_task: Vec<Option<f64>> = (0..td)
        .map(|t| {
            let (scores, labels): (Vec<f64>, Vec<bool>) = data
                .labels()
                .iter()
                .enumerate()
                .filter_map(|(g, row)| row[t].map(|y| (picked[g * td + t], y)))
                .unzip();
            metric.compute(&scores, &labels)
        })
        .collect();
    let defined: Vec<f64> = per_task.iter().flatten().copied().collect();
    Ok(EvalReport {
        metric,
        task_names: data.manifest().task_names.clone(),
        per_task,
        macro_mean: mean_std(&defined).map(|(m, _)| m),
        loss,
    })
}

/// Fraction of graphs whose highest logit is their single positive task.
/// Rows that are not exactly one-hot are skipped; `None` if none remain.
pub fn class_accuracy(model: &Model, data: &Dataset) -> Result<Option<f64>> {
    let cols = task_columns(&model.config, data)?;
    let logits = predict(model, data)?;
    let tm = model.config.num_tasks();
    let (mut hits, mut total) = (0usize, 0usize);
    for (g, row) in data.labels().iter().enumerate() {
        let mut pos = row.iter().enumerate().filter(|(_, l)| **l == Some(true));
        let (Some((truth, _)), None) = (pos.next(), pos.next()) else {
            continue;
        };
        if row.iter().any(Option::is_none) {
            continue;
        }
        let scores: Vec<f64> = cols.iter().map(|&c| logits.data()[g * tm + c]).collect();
        let guess = (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .expect("at least one task");
        total += 1;
        hits += (guess == truth) as usize;
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

/// Whether `r` beats the best epoch so far: higher macro metric first, then
/// lower loss. A saturated metric (all tasks ranked perfectly) still lets
/// later epochs win on loss. Reports without a macro value rank below any
/// report that has one.
fn improves(r: &EpochRecord, best: &EpochRecord) -> bool {
    use std::cmp::Ordering::*;
    let by_metric = match (r.valid_metric, best.valid_metric) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => Greater,
        (None, Some(_)) => Less,
        (None, None) => Equal,
    };
    by_metric == Greater || (by_metric == Equal && r.valid_loss < best.valid_loss)
}

/// Trains a fresh model seeded with `cfg.seed`: shuffled minibatches, masked
/// BCE, Adam. Validation is scored after every epoch and the best epoch's
/// parameters are returned.
pub fn train_model(
    model_config: &ModelConfig,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    model_config.check_manifest(train.manifest())?;
    if train.manifest().task_names != model_config.task_names {
        return Err(Error::ManifestMismatch(format!(
            "training tasks {:?} differ from model tasks {:?}",
            train.manifest().task_names,
            model_config.task_names
        )));
    }
    task_columns(model_config, valid)?;

    let mut model = Model::init(model_config.clone(), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = OptimizerState::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let k = model_config.required_k();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Model)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut observed) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = collate(train, chunk, k)?;
            let count: f64 = batch.mask.iter().sum();
            if count == 0.0 {
                continue;
            }
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let mut mode = Mode::train(&mut rng);
            let out = model.forward(&mut tape, &vars, &batch, &mut mode)?;
            let updates = mode.take_updates();
            let loss =
                tape.bce_with_logits_masked(out.logits, batch.targets.clone(), batch.mask.clone())?;
            loss_sum += tape.value(loss).data()[0] * count;
            observed += count;
            let grads = tape.backward(loss)?;
            let grads = model.collect_grads(&vars, &grads);
            adam_step(&mut model.params, &grads, &mut opt, &cfg.adam)?;
            model.apply_stats(&updates);
        }
        if cfg.recalibrate_bn {
            model.recalibrate_stats(train, cfg.batch_size)?;
        }
        let report = evaluate(&model, valid, cfg.metric)?;
        history.push(EpochRecord {
            epoch,
            train_loss: if observed > 0.0 {
                loss_sum / observed
            } else {
                0.0
            },
            valid_loss: report.loss,
            valid_metric: report.macro_mean,
        });

        if cfg.patience == 0 {
            continue;
        }
        let record = history.last().expect("pushed above");
        match &best {
            Some((b, _)) if !improves(record, &history[*b - 1]) => {}
            _ => best = Some((epoch, model.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (model, best_epoch) = match best {
        Some((e, m)) => (m, e),
        None => (model, history.len()),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// One replicate: training plus the reports on valid and test.
#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub valid: EvalReport,
    pub test: EvalReport,
}

/// Trains with `seed` in place of `cfg.seed` and scores both held-out splits.
pub fn run_one(
    model_config: &ModelConfig,
    train: &Dataset,
    valid: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ReplicateRun> {
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let outcome = train_model(model_config, train, valid, &cfg)?;
    let valid = evaluate(&outcome.model, valid, cfg.metric)?;
    let test = evaluate(&outcome.model, test, cfg.metric)?;
    Ok(ReplicateRun {
        seed,
        outcome,
        valid,
        test,
    })
}

/// Seeds `seed, seed + 1, ..` for `n` replicates.
pub fn replicate_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seed.wrapping_add(i)).collect()
}

/// Mean and sample standard deviation of per-task and macro metrics over
/// replicate reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub metric: Metric,
    pub replicates: usize,
    pub task_names: Vec<String>,
    pub per_task: Vec<Option<(f64, f64)>>,
    pub macro_mean: Option<(f64, f64)>,
}

impl ReplicateSummary {
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::InvalidArgument("no replicate reports".into()))?;
        if reports
            .iter()
            .any(|r| r.task_names != first.task_names || r.metric != first.metric)
        {
            return Err(Error::InvalidArgument(
                "replicate reports disagree on tasks or metric".into(),
            ));
        }
        let per_task = (0..first.task_names.len())
            .map(|t| {
                let vals: Vec<f64> = reports.iter().filter_map(|r| r.per_task[t]).collect();
                mean_std(&vals)
            })
            .collect();
        let macros: Vec<f64> = reports.iter().filter_map(|r| r.macro_mean).collect();
        Ok(Self {
            metric: first.metric,
            replicates: reports.len(),
            task_names: first.task_names.clone(),
            per_task,
            macro_mean: mean_std(&macros),
        })
    }
}

/// Runs `cfg.replicates` sequential replicates with seeds `cfg.seed + i` and
/// summarises their test reports.
pub fn run_replicates(
    model_config: &ModelConfig,
    train: &Dataset,
    valid: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Vec<ReplicateRun>, ReplicateSummary)> {
    cfg.validate()?;
    let runs = replicate_seeds(cfg.seed, cfg.replicates)
        .into_iter()
        .map(|s| run_one(model_config, train, valid, test, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let tests: Vec<EvalReport> = runs.iter().map(|r| r.test.clone()).collect();
    let summary = ReplicateSummary::from_reports(&tests)?;
    Ok((runs, summary))
}

#[cfg(test)]
mod tests;
