use super::*;
use crate::data::{combine_datasets, random_split, Manifest};
use crate::graph::{gen_synthetic_dataset, SynthTask};
use crate::nn::ConvType;

fn small_config(data: &Dataset, conv: ConvType) -> ModelConfig {
    ModelConfig {
        dropout: 0.0,
        ..ModelConfig::for_manifest(conv, 3, 2, 8, data.manifest())
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        patience: 0,
        seed: 3,
        replicates: 1,
        ..TrainConfig::default()
    }
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

#[test]
fn training_is_deterministic() {
    let data = gen_synthetic_dataset(SynthTask::RandomMultitask, 40, 1).unwrap();
    let split = random_split(&data, (0.8, 0.1, 0.1), 0).unwrap();
    let cfg = small_config(&data, ConvType::GinePlus);
    let a = train_model(&cfg, &split.train, &split.valid, &quick(3)).unwrap();
    let b = train_model(&cfg, &split.train, &split.valid, &quick(3)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let c = train_model(
        &cfg,
        &split.train,
        &split.valid,
        &TrainConfig {
            seed: 4,
            ..quick(3)
        },
    )
    .unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn zero_patience_keeps_last_epoch() {
    let data = gen_synthetic_dataset(SynthTask::HasSmallCycle, 30, 2).unwrap();
    let split = random_split(&data, (0.8, 0.1, 0.1), 0).unwrap();
    let out = train_model(
        &small_config(&data, ConvType::Gine),
        &split.train,
        &split.valid,
        &quick(4),
    )
    .unwrap();
    assert_eq!(out.history.len(), 4);
    assert_eq!(out.best_epoch, 4);
}

#[test]
fn early_stopping_returns_best_epoch() {
    let data = gen_synthetic_dataset(SynthTask::HasSmallCycle, 40, 2).unwrap();
    let split = random_split(&data, (0.6, 0.2, 0.2), 0).unwrap();
    let cfg = TrainConfig {
        patience: 2,
        ..quick(30)
    };
    let out = train_model(
        &small_config(&data, ConvType::Gine),
        &split.train,
        &split.valid,
        &cfg,
    )
    .unwrap();
    let best = &out.history[out.best_epoch - 1];
    assert!(out.history.iter().all(|r| !improves(r, best)));
    assert!(out.history.len() - out.best_epoch <= 2);
    let report = evaluate(&out.model, &split.valid, cfg.metric).unwrap();
    assert_eq!(report.macro_mean, best.valid_metric);
}

#[test]
fn full_batch_loss_falls_over_first_epochs() {
    let data = gen_synthetic_dataset(SynthTask::HasSmallCycle, 64, 5).unwrap();
    let cfg = small_config(&data, ConvType::GinePlus);
    let tc = TrainConfig {
        batch_size: 64,
        ..quick(5)
    };
    let out = train_model(&cfg, &data, &data, &tc).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|r| r.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn empty_training_split_is_rejected() {
    let data = gen_synthetic_dataset(SynthTask::HasSmallCycle, 10, 0).unwrap();
    let cfg = small_config(&data, ConvType::Gine);
    let empty = data.subset(&[]);
    assert!(matches!(
        train_model(&cfg, &empty, &data, &quick(1)),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn evaluation_masks_missing_labels() {
    let data = gen_synthetic_dataset(SynthTask::RandomMultitask, 50, 9).unwrap();
    let model = Model::init(small_config(&data, ConvType::Gine), 1).unwrap();
    let logits = predict(&model, &data).unwrap();
    let t = data.num_tasks();
    let observed: Vec<f64> = data
        .labels()
        .iter()
        .enumerate()
        .flat_map(|(g, row)| {
            let logits = &logits;
            row.iter().enumerate().filter_map(move |(k, l)| {
                l.map(|y| bce(logits.data()[g * t + k], if y { 1.0 } else { 0.0 }))
            })
        })
        .collect();
    let report = evaluate(&model, &data, Metric::RocAuc).unwrap();
    let packed = observed.iter().sum::<f64>() / observed.len() as f64;
    assert!((report.loss - packed).abs() < 1e-12);
    assert_eq!(report, evaluate(&model, &data, Metric::RocAuc).unwrap());
    let defined: Vec<f64> = report.per_task.iter().flatten().copied().collect();
    let avg = defined.iter().sum::<f64>() / defined.len() as f64;
    assert!((report.macro_mean.unwrap() - avg).abs() < 1e-15);
}

#[test]
fn all_missing_task_is_undefined() {
    let data = gen_synthetic_dataset(SynthTask::HasSmallCycle, 20, 1).unwrap();
    let extra = Dataset::new(
        data.graphs().to_vec(),
        vec![vec![None]; data.len()],
        Manifest::new(vec![1], vec![1], vec!["blank".into()]),
    )
    .unwrap();
    let both = combine_datasets(&data, &extra).unwrap();
    let model = Model::init(small_config(&both, ConvType::Gine), 0).unwrap();
    let report = evaluate(&model, &both, Metric::PrcAuc).unwrap();
    assert_eq!(report.per_task[1], None);
    assert_eq!(report.macro_mean, report.per_task[0]);
}

#[test]
fn augmented_training_reports_primary_tasks_only() {
    let a = gen_synthetic_dataset(SynthTask::HasSmallCycle, 30, 1).unwrap();
    let b = gen_synthetic_dataset(SynthTask::HasSmallCycle, 30, 2).unwrap();
    let mut b = b;
    b.manifest_mut().task_names = vec!["aux".into()];
    let split = random_split(&a, (0.6, 0.2, 0.2), 0).unwrap();
    let train = combine_datasets(&split.train, &b).unwrap();
    let cfg = small_config(&train, ConvType::Gine);
    let run = run_one(&cfg, &train, &split.valid, &split.test, &quick(2), 0).unwrap();
    assert_eq!(run.valid.task_names, vec!["has_small_cycle".to_string()]);
    assert_eq!(run.test.task_names, run.valid.task_names);
    assert!(evaluate(&run.outcome.model, &b, Metric::RocAuc).is_ok());
    let only_a = Model::init(small_config(&a, ConvType::Gine), 0).unwrap();
    assert!(matches!(
        evaluate(&only_a, &b, Metric::RocAuc),
        Err(Error::ManifestMismatch(_))
    ));
}

#[test]
fn replicate_statistics() {
    let data = gen_synthetic_dataset(SynthTask::HasSmallCycle, 30, 3).unwrap();
    let split = random_split(&data, (0.6, 0.2, 0.2), 0).unwrap();
    let cfg = small_config(&data, ConvType::Gine);
    let (runs, one) =
        run_replicates(&cfg, &split.train, &split.valid, &split.test, &quick(1)).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(one.macro_mean.map(|m| m.1), Some(0.0));

    let tc = TrainConfig {
        replicates: 3,
        ..quick(1)
    };
    let (runs, summary) =
        run_replicates(&cfg, &split.train, &split.valid, &split.test, &tc).unwrap();
    assert_eq!(
        runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![3, 4, 5]
    );
    assert_eq!(summary.replicates, 3);

    let same = vec![runs[0].test.clone(), runs[0].test.clone()];
    assert_eq!(
        ReplicateSummary::from_reports(&same)
            .unwrap()
            .macro_mean
            .unwrap()
            .1,
        0.0
    );
}

#[test]
fn class_accuracy_counts_argmax_hits() {
    let data = gen_synthetic_dataset(SynthTask::MinCycleClass, 20, 0).unwrap();
    let mut model = Model::init(small_config(&data, ConvType::Gine), 0).unwrap();
    // constant logits favouring class 0 give the class-0 rate
    let w = model.params.get_mut("classifier.weight").unwrap();
    w.data_mut().iter_mut().for_each(|x| *x = 0.0);
    model.params.get_mut("classifier.bias").unwrap().data_mut()[0] = 1.0;
    let first = data.labels().iter().filter(|r| r[0] == Some(true)).count();
    let acc = class_accuracy(&model, &data).unwrap().unwrap();
    assert!((acc - first as f64 / data.len() as f64).abs() < 1e-15);
}

#[test]
fn selection_breaks_metric_ties_on_loss() {
    let rec = |m: Option<f64>, loss: f64| EpochRecord {
        epoch: 1,
        train_loss: 0.0,
        valid_loss: loss,
        valid_metric: m,
    };
    assert!(improves(&rec(Some(0.9), 5.0), &rec(Some(0.8), 0.1)));
    assert!(improves(&rec(Some(1.0), 0.1), &rec(Some(1.0), 0.2)));
    assert!(!improves(&rec(Some(1.0), 0.2), &rec(Some(1.0), 0.2)));
    assert!(improves(&rec(None, 0.1), &rec(None, 0.2)));
    assert!(!improves(&rec(None, 0.0), &rec(Some(0.1), 9.0)));
}
