//! End-to-end acceptance checks. Each check prints one `PASS`/`FAIL` line;
//! the process exits non-zero if any check fails.

use std::time::{Duration, Instant};

use gineplus::data::{collate_graphs, combine_datasets, random_split};
use gineplus::graph::{crossed_double_cover, gen_synthetic_dataset, LabeledGraph, SynthTask};
use gineplus::nn::{param_count, ConvType, Embeddings, Mode, Model, ModelConfig, ParamVars};
use gineplus::tensor::{gradcheck, Tensor};
use gineplus::train::{
    class_accuracy, evaluate, prc_auc, roc_auc, run_one, train_model, Metric, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn uniform_config(conv: ConvType, radius: usize, layers: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        conv,
        radius,
        layers,
        hidden,
        virtual_node: false,
        dropout: 0.0,
        task_names: vec!["t".into()],
        node_cardinalities: vec![1],
        edge_cardinalities: vec![1],
    }
}

fn featured_config(conv: ConvType, radius: usize, layers: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        node_cardinalities: vec![5, 3],
        edge_cardinalities: vec![4],
        ..uniform_config(conv, radius, layers, hidden)
    }
}

fn cycle(n: usize) -> LabeledGraph {
    LabeledGraph::uniform(n, (0..n).map(|i| (i, (i + 1) % n)).collect()).unwrap()
}

fn with_random_features(g: &LabeledGraph, rng: &mut impl Rng) -> LabeledGraph {
    let nodes = (0..g.num_nodes())
        .map(|_| vec![rng.gen_range(0..5), rng.gen_range(0..3)])
        .collect();
    let edges = (0..g.num_edges())
        .map(|_| vec![rng.gen_range(0..4)])
        .collect();
    LabeledGraph::new(2, 1, nodes, g.edges().to_vec(), edges).unwrap()
}

/// Random recursive tree plus `extra` chords.
fn random_connected(n: usize, extra: usize, rng: &mut impl Rng) -> LabeledGraph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    while edges.len() < n - 1 + extra {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let e = (u.min(v), u.max(v));
        if u != v && !edges.iter().any(|&(a, b)| (a.min(b), a.max(b)) == e) {
            edges.push(e);
        }
    }
    LabeledGraph::uniform(n, edges).unwrap()
}

fn embed(model: &Model, g: &LabeledGraph) -> Embeddings {
    let batch = collate_graphs(
        &[g],
        None,
        model.config.num_tasks(),
        model.config.required_k(),
    )
    .unwrap();
    model.embed(&batch).unwrap()
}

fn row_diff(a: &Tensor, i: usize, b: &Tensor, j: usize) -> f64 {
    a.row(i)
        .iter()
        .zip(b.row(j))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn within(elapsed: Duration, limit: Duration, detail: String, ok: bool) -> Check {
    let msg = format!(
        "{detail}; {:.2}s (limit {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    if ok && elapsed < limit {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn wl_blindness() -> Check {
    let start = Instant::now();
    let triangles = cycle(3).disjoint_union(&cycle(3)).unwrap();
    let hexagon = cycle(6);
    let mut worst = 0.0f64;
    for conv in [ConvType::Gine, ConvType::Gcn] {
        for layers in 1..=3 {
            for seed in 0..10 {
                let model = Model::init(uniform_config(conv, 1, layers, 16), seed).unwrap();
                let a = embed(&model, &triangles).graph_emb;
                let b = embed(&model, &hexagon).graph_emb;
                worst = worst.max(a.max_abs_diff(&b));
            }
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(1),
        format!("max |emb(C3+C3) - emb(C6)| = {worst:.2e} over 60 models (tol 1e-5)"),
        worst < 1e-5,
    )
}

fn double_cover_invariance() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = rng.gen_range(8..=16);
        let extra = rng.gen_range(1..=3);
        let g = with_random_features(&random_connected(n, extra, &mut rng), &mut rng);
        let edge = *g.edges().choose(&mut rng).unwrap();
        let hat = crossed_double_cover(&g, edge).unwrap();
        for conv in [ConvType::Gine, ConvType::Gcn] {
            let model = Model::init(featured_config(conv, 1, 3, 16), trial).unwrap();
            let a = embed(&model, &g);
            let b = embed(&model, &hat);
            for (la, lb) in a.node_layers.iter().zip(&b.node_layers) {
                for k in 0..n {
                    worst = worst
                        .max(row_diff(la, k, lb, k))
                        .max(row_diff(la, k, lb, k + n));
                }
            }
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(10),
        format!("max node-embedding gap G vs both copies = {worst:.2e}, 20 graphs x 2 convs x all layers (tol 1e-5)"),
        worst < 1e-5,
    )
}

fn distinguishability() -> Check {
    let start = Instant::now();
    let triangles = cycle(3).disjoint_union(&cycle(3)).unwrap();
    let hexagon = cycle(6);
    let mut separated = 0;
    let mut smallest = f64::INFINITY;
    for seed in 0..10 {
        let model = Model::init(uniform_config(ConvType::GinePlus, 2, 2, 16), seed).unwrap();
        let a = embed(&model, &triangles).graph_emb;
        let b = embed(&model, &hexagon).graph_emb;
        let norm = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        smallest = smallest.min(norm);
        separated += (norm > 1e-3) as usize;
    }
    within(
        start.elapsed(),
        Duration::from_secs(1),
        format!("GINE+ K=2 L=2 separated C3+C3 from C6 for {separated}/10 seeds (min norm {smallest:.3e}, need >= 9)"),
        separated >= 9,
    )
}

fn majority_rate(data: &gineplus::data::Dataset) -> f64 {
    let t = data.num_tasks();
    let counts: Vec<usize> = (0..t)
        .map(|k| data.labels().iter().filter(|r| r[k] == Some(true)).count())
        .collect();
    *counts.iter().max().unwrap() as f64 / data.len() as f64
}

fn cycle_experiment() -> Check {
    let start = Instant::now();
    let data = gen_synthetic_dataset(SynthTask::MinCycleClass, 600, 7).unwrap();
    let split = random_split(&data, (0.8, 0.1, 0.1), 7).unwrap();
    let tc = TrainConfig {
        seed: 1,
        replicates: 1,
        ..TrainConfig::default()
    };
    let base = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::for_manifest(ConvType::Gine, 1, 3, 32, data.manifest())
    };
    let gine = train_model(&base, &split.train, &split.valid, &tc).map_err(|e| e.to_string())?;
    let gine_acc = class_accuracy(&gine.model, &split.test)
        .map_err(|e| e.to_string())?
        .unwrap();
    let majority = majority_rate(&split.test);

    let plus_cfg = ModelConfig {
        conv: ConvType::GinePlus,
        radius: 3,
        ..base
    };
    let plus =
        train_model(&plus_cfg, &split.train, &split.valid, &tc).map_err(|e| e.to_string())?;
    let plus_acc = class_accuracy(&plus.model, &split.test)
        .map_err(|e| e.to_string())?
        .unwrap();
    within(
        start.elapsed(),
        Duration::from_secs(300),
        format!(
            "test accuracy GINE {gine_acc:.3} vs majority {majority:.3} (tol 0.02); GINE+ K=3 L=3 H=32 {plus_acc:.3} after {} epochs (need >= 0.95)",
            plus.history.len()
        ),
        (gine_acc - majority).abs() <= 0.02 && plus_acc >= 0.95,
    )
}

/// BFS depths and parents from `root`.
fn bfs_tree(g: &LabeledGraph, root: usize) -> (Vec<usize>, Vec<usize>) {
    let adj = g.adjacency();
    let mut depth = vec![usize::MAX; g.num_nodes()];
    let mut parent = vec![usize::MAX; g.num_nodes()];
    depth[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    (depth, parent)
}

fn bump(g: &LabeledGraph, node: usize) -> LabeledGraph {
    let mut h = g.clone();
    let f = &g.node_feats()[node];
    h.set_node_feats(node, vec![(f[0] + 1) % 5, (f[1] + 1) % 3])
        .unwrap();
    h
}

fn locality() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (k, l) = (3, 3);
    let mut trees = 0;
    let mut leaked = 0;
    let mut moved_inside = 0;
    while trees < 50 {
        let n: usize = rng.gen_range(14..=30);
        // random recursive tree with a bias towards long branches
        let edges: Vec<(usize, usize)> = (1..n)
            .map(|v| (rng.gen_range(v.saturating_sub(3)..v), v))
            .collect();
        let tree = LabeledGraph::uniform(n, edges).unwrap();
        let (depth, parent) = bfs_tree(&tree, 0);
        if depth.iter().max().copied().unwrap_or(0) <= 5 {
            continue;
        }
        trees += 1;
        let g = with_random_features(&tree, &mut rng);
        let far = (0..n).filter(|&v| depth[v] == l + 1).collect::<Vec<_>>();
        let target = *far.choose(&mut rng).unwrap();
        let model =
            Model::init(featured_config(ConvType::GinePlus, k, l, 8), trees as u64).unwrap();
        let before = embed(&model, &g);
        let after = embed(&model, &bump(&g, target));
        if before.node_layers[l].row(0) != after.node_layers[l].row(0) {
            leaked += 1;
        }
        // sanity: the node one step closer does move
        let inside = parent[target];
        let moved = embed(&model, &bump(&g, inside));
        if before.node_layers[l].row(0) != moved.node_layers[l].row(0) {
            moved_inside += 1;
        }
    }

    let path = LabeledGraph::uniform(8, (1..8).map(|i| (i - 1, i)).collect()).unwrap();
    let path = with_random_features(&path, &mut rng);
    let naive = Model::init(featured_config(ConvType::NaiveGinePlus, 3, 2, 8), 0).unwrap();
    let a = embed(&naive, &path);
    let b = embed(&naive, &bump(&path, 4));
    let naive_gap = row_diff(&a.node_layers[2], 0, &b.node_layers[2], 0);

    within(
        start.elapsed(),
        Duration::from_secs(10),
        format!(
            "GINE+ K={k} L={l}: distance-{} perturbation changed the probe in {leaked}/50 trees (need 0; distance-{l} moved it in {moved_inside}/50); NaiveGINE+ K=3 L=2 distance-4 change on a path = {naive_gap:.2e} (need > 0)",
            l + 1
        ),
        leaked == 0 && naive_gap > 0.0,
    )
}

fn parameter_count() -> Check {
    let mut mismatches = Vec::new();
    for (l, h) in [(1, 8), (3, 100), (5, 400)] {
        for vn in [false, true] {
            let gine = ModelConfig {
                virtual_node: vn,
                ..featured_config(ConvType::Gine, 3, l, h)
            };
            let plus = ModelConfig {
                conv: ConvType::GinePlus,
                ..gine.clone()
            };
            if param_count(&plus) - param_count(&gine) != l * 3 * h {
                mismatches.push((l, h, vn));
            }
        }
    }
    let big = ModelConfig {
        virtual_node: true,
        task_names: (0..128).map(|i| format!("task_{i}")).collect(),
        node_cardinalities: vec![119, 4, 12, 12, 10, 6, 6, 2, 2],
        edge_cardinalities: vec![5, 6, 2],
        ..featured_config(ConvType::Gine, 3, 5, 400)
    };
    let plus = ModelConfig {
        conv: ConvType::GinePlus,
        ..big.clone()
    };
    let (a, b) = (param_count(&big), param_count(&plus));
    let rel = (b - a) as f64 / a as f64;
    let realized = Model::init(plus.clone(), 0).unwrap().param_count() == b;
    let msg = format!(
        "delta == L*K*H in all 6 configs: {}; L=5 H=400 T=128 with virtual node: {a} -> {b} (+{:.3}%, need < 0.5%); realized count matches: {realized}",
        mismatches.is_empty(),
        100.0 * rel
    );
    if mismatches.is_empty() && rel < 0.005 && realized {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut differing = 0;
    for seed in 0..100u64 {
        let n = rng.gen_range(3..=14);
        let extra = rng.gen_range(0..=3).min(n * (n - 1) / 2 - (n - 1));
        let g = with_random_features(&random_connected(n, extra, &mut rng), &mut rng);
        let layers = rng.gen_range(1..=3);
        let gine = Model::init(featured_config(ConvType::Gine, 1, layers, 8), seed).unwrap();
        let reference = embed(&gine, &g);
        for conv in [ConvType::GinePlus, ConvType::NaiveGinePlus] {
            let mut other = Model::init(featured_config(conv, 1, layers, 8), seed + 1000).unwrap();
            for (name, t) in other.params.iter_mut() {
                let src = name.strip_suffix("eps0").map(|p| format!("{p}eps"));
                match gine.params.get(src.as_deref().unwrap_or(name)) {
                    Ok(v) => *t = v.clone(),
                    Err(_) => t.data_mut().iter_mut().for_each(|x| *x = 0.0),
                }
            }
            let out = embed(&other, &g);
            if out.node_layers != reference.node_layers || out.logits != reference.logits {
                differing += 1;
            }
        }
    }
    let msg = format!("GINE+ / NaiveGINE+ (K=1, eps=0) differ bitwise from GINE (eps=0) on {differing}/200 comparisons");
    if differing == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn full_gradcheck() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = LabeledGraph::uniform(
        6,
        vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)],
    )
    .unwrap();
    let g = with_random_features(&g, &mut rng);
    let mut cfg = featured_config(ConvType::GinePlus, 3, 2, 8);
    cfg.task_names = vec!["a".into(), "b".into()];
    let model = Model::init(cfg, 17).unwrap();
    let labels = [Some(true), Some(false)];
    let batch = collate_graphs(&[&g], Some(&[&labels[..]]), 2, 3).unwrap();
    let names: Vec<String> = model.params.names().cloned().collect();
    let values: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let worst = gradcheck(
        |tape, vars| {
            let pv: ParamVars = names.iter().cloned().zip(vars.iter().copied()).collect();
            let out = model.forward(tape, &pv, &batch, &mut Mode::Eval)?;
            tape.bce_with_logits_masked(out.logits, batch.targets.clone(), batch.mask.clone())
        },
        &values,
        1e-6,
    )
    .map_err(|e| e.to_string())?;
    let msg = format!(
        "GINE+ K=3 L=2 H=8, 6-node graph, {} parameters: max relative error {worst:.2e} (need < 1e-4)",
        model.param_count()
    );
    if worst < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn pairwise_roc(s: &[f64], y: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                pairs += 1;
                wins += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Precision-recall accumulation over every distinct threshold, counting
/// from scratch at each one.
fn all_threshold_ap(s: &[f64], y: &[bool]) -> Option<f64> {
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 {
        return None;
    }
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for t in thresholds {
        let tp = (0..s.len()).filter(|&i| s[i] >= t && y[i]).count();
        let predicted = (0..s.len()).filter(|&i| s[i] >= t).count();
        if tp > prev_tp {
            ap += ((tp - prev_tp) as f64 / pos as f64) * (tp as f64 / predicted as f64);
        }
        prev_tp = tp;
    }
    Some(ap)
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut roc_bad, mut prc_bad, mut tied) = (0, 0, 0);
    for _ in 0..200 {
        let levels = rng.gen_range(2..=20);
        let scores: Vec<f64> = (0..50)
            .map(|_| rng.gen_range(0..levels) as f64 / levels as f64)
            .collect();
        let labels: Vec<bool> = (0..50).map(|_| rng.gen_bool(0.3)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        tied += (sorted.len() < scores.len()) as usize;
        roc_bad += (roc_auc(&scores, &labels) != pairwise_roc(&scores, &labels)) as usize;
        prc_bad += (prc_auc(&scores, &labels) != all_threshold_ap(&scores, &labels)) as usize;
    }
    let msg = format!(
        "200 instances of 50 points ({tied} with ties): ROC mismatches {roc_bad}, PRC mismatches {prc_bad} (exact equality)"
    );
    if roc_bad == 0 && prc_bad == 0 && tied > 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn augmentation() -> Check {
    let a = gen_synthetic_dataset(SynthTask::RandomMultitask, 60, 1).map_err(|e| e.to_string())?;
    let mut b =
        gen_synthetic_dataset(SynthTask::RandomMultitask, 80, 2).map_err(|e| e.to_string())?;
    b.manifest_mut().task_names = (0..b.num_tasks()).map(|i| format!("aux_{i}")).collect();
    let combined = combine_datasets(&a, &b).map_err(|e| e.to_string())?;
    let conserved = combined.non_missing_count() == a.non_missing_count() + b.non_missing_count();

    let split = random_split(&a, (0.8, 0.1, 0.1), 0).map_err(|e| e.to_string())?;
    let train = combine_datasets(&split.train, &b).map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::for_manifest(ConvType::GinePlus, 2, 2, 8, train.manifest())
    };
    let tc = TrainConfig {
        epochs: 2,
        batch_size: 32,
        patience: 0,
        metric: Metric::RocAuc,
        ..TrainConfig::default()
    };
    let run =
        run_one(&cfg, &train, &split.valid, &split.test, &tc, 0).map_err(|e| e.to_string())?;
    let primary = &a.manifest().task_names;
    let names_ok = &run.valid.task_names == primary && &run.test.task_names == primary;
    let valid_again =
        evaluate(&run.outcome.model, &split.valid, Metric::RocAuc).map_err(|e| e.to_string())?;
    let msg = format!(
        "labels {} + {} = {} observed; model outputs {} tasks, valid report columns {:?}",
        a.non_missing_count(),
        b.non_missing_count(),
        combined.non_missing_count(),
        cfg.num_tasks(),
        run.valid.task_names
    );
    if conserved && names_ok && valid_again == run.valid {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn bench() -> Check {
    let data =
        gen_synthetic_dataset(SynthTask::HasSmallCycle, 200, 4).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        epochs: 3,
        patience: 0,
        ..TrainConfig::default()
    };
    let time = |conv: ConvType, k: usize| -> Result<f64, String> {
        let cfg = ModelConfig::for_manifest(conv, k, 3, 32, data.manifest());
        let start = Instant::now();
        train_model(&cfg, &data, &data, &tc).map_err(|e| e.to_string())?;
        Ok(start.elapsed().as_secs_f64() / tc.epochs as f64)
    };
    let gine = time(ConvType::Gine, 1)?;
    let plus = time(ConvType::GinePlus, 3)?;
    Ok(format!(
        "informational: per-epoch GINE {:.1} ms, GINE+ K=3 {:.1} ms, ratio {:.3}",
        gine * 1e3,
        plus * 1e3,
        plus / gine
    ))
}

fn main() {
    let checks: [(&str, fn() -> Check); 11] = [
        ("wl-blindness", wl_blindness),
        ("double-cover-invariance", double_cover_invariance),
        ("distinguishability", distinguishability),
        ("cycle-classification", cycle_experiment),
        ("locality", locality),
        ("parameter-count", parameter_count),
        ("reduction", reduction),
        ("gradcheck", full_gradcheck),
        ("metric-oracles", metric_oracles),
        ("augmentation", augmentation),
        ("bench", bench),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
