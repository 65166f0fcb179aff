use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Label, Manifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Shuffles by `seed` and cuts into train/valid/test. Valid and test sizes
/// are `floor(n * fraction)`; the remainder goes to train.
pub fn random_split(d: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(*f > 0.0)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let n = d.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "cannot split a dataset of {n} graphs"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (n as f64 * fv).floor() as usize;
    let n_test = (n as f64 * fs).floor() as usize;
    let n_train = n - n_valid - n_test;
    Ok(Split {
        train: d.subset(&order[..n_train]),
        valid: d.subset(&order[n_train..n_train + n_valid]),
        test: d.subset(&order[n_train + n_valid..]),
    })
}

/// Task union of two datasets over the same featurization.
///
/// Tasks are `a`'s followed by `b`'s; graphs of one dataset get missing
/// labels for the other's tasks.
pub fn combine_datasets(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    let (ma, mb) = (a.manifest(), b.manifest());
    if !ma.same_features(mb) {
        return Err(Error::ManifestMismatch(
            "datasets have different feature cardinalities".into(),
        ));
    }
    if let Some(dup) = ma.task_names.iter().find(|t| mb.task_names.contains(t)) {
        return Err(Error::ManifestMismatch(format!(
            "task `{dup}` present in both datasets"
        )));
    }
    let (ta, tb) = (ma.num_tasks(), mb.num_tasks());
    let mut labels: Vec<Vec<Label>> = Vec::with_capacity(a.len() + b.len());
    labels.extend(a.labels().iter().map(|row| {
        let mut r = row.clone();
        r.resize(ta + tb, None);
        r
    }));
    labels.extend(b.labels().iter().map(|row| {
        let mut r = vec![None; ta];
        r.extend_from_slice(row);
        r
    }));
    let mut graphs = a.graphs().to_vec();
    graphs.extend_from_slice(b.graphs());

    let mut tasks = ma.task_names.clone();
    tasks.extend(mb.task_names.iter().cloned());
    let manifest = Manifest::new(
        ma.node_field_cardinalities.clone(),
        ma.edge_field_cardinalities.clone(),
        tasks,
    );
    Dataset::new(graphs, labels, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_synthetic_dataset, LabeledGraph, SynthTask};
    use proptest::prelude::*;

    fn tiny(n: usize, tasks: &[&str]) -> Dataset {
        let g = LabeledGraph::uniform(2, vec![(0, 1)]).unwrap();
        Dataset::new(
            vec![g; n],
            (0..n)
                .map(|i| tasks.iter().map(|_| Some(i % 2 == 0)).collect())
                .collect(),
            Manifest::new(
                vec![1],
                vec![1],
                tasks.iter().map(|s| s.to_string()).collect(),
            ),
        )
        .unwrap()
    }

    #[test]
    fn split_sizes() {
        let d = gen_synthetic_dataset(SynthTask::HasSmallCycle, 100, 0).unwrap();
        let s = random_split(&d, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (80, 10, 10));
        assert_eq!(s, random_split(&d, (0.8, 0.1, 0.1), 1).unwrap());
        assert_eq!(s.train.manifest(), d.manifest());

        assert!(random_split(&d, (0.8, 0.1, 0.2), 1).is_err());
        assert!(random_split(&d, (1.0, 0.0, 0.0), 1).is_err());
        assert!(random_split(&d.subset(&[0, 1]), (0.8, 0.1, 0.1), 1).is_err());
    }

    #[test]
    fn combine_arithmetic() {
        let a = tiny(2, &["x"]);
        let b = tiny(3, &["y", "z"]);
        let c = combine_datasets(&a, &b).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.num_tasks(), 3);
        let missing = c.labels().iter().flatten().filter(|l| l.is_none()).count();
        assert_eq!(missing, 2 * 2 + 3 * 1);
        assert_eq!(
            c.non_missing_count(),
            a.non_missing_count() + b.non_missing_count()
        );
        assert_eq!(c.manifest().task_names, ["x", "y", "z"]);
    }

    #[test]
    fn combine_with_empty_is_identity() {
        let a = tiny(4, &["x"]);
        let c = combine_datasets(&a, &Dataset::empty(vec![1], vec![1])).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn combine_rejects_mismatch() {
        let a = tiny(2, &["x"]);
        let m = gen_synthetic_dataset(SynthTask::RandomMultitask, 2, 0).unwrap();
        assert!(matches!(
            combine_datasets(&a, &m),
            Err(Error::ManifestMismatch(_))
        ));
        assert!(matches!(
            combine_datasets(&a, &a),
            Err(Error::ManifestMismatch(_))
        ));
    }

    #[test]
    fn combine_associative_up_to_order() {
        let (a, b, c) = (tiny(2, &["x"]), tiny(3, &["y"]), tiny(1, &["z"]));
        let left = combine_datasets(&combine_datasets(&a, &b).unwrap(), &c).unwrap();
        let right = combine_datasets(&a, &combine_datasets(&b, &c).unwrap()).unwrap();
        assert_eq!(left, right);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn split_is_exact_partition(n in 3usize..60, seed in any::<u64>(), v in 1u32..4, t in 1u32..4) {
            let g = LabeledGraph::uniform(1, vec![]).unwrap();
            // node count encodes the graph id so the partition can be checked
            let graphs: Vec<_> = (0..n).map(|i| {
                let mut h = g.clone();
                for _ in 0..i { h = h.disjoint_union(&g).unwrap(); }
                h
            }).collect();
            let d = Dataset::new(graphs, vec![vec![None]; n], Manifest::new(vec![1], vec![1], vec!["t".into()])).unwrap();
            let (fv, ft) = (v as f64 / 10.0, t as f64 / 10.0);
            let s = random_split(&d, (1.0 - fv - ft, fv, ft), seed).unwrap();
            prop_assert_eq!(s.valid.len(), (n as f64 * fv).floor() as usize);
            prop_assert_eq!(s.test.len(), (n as f64 * ft).floor() as usize);
            let mut ids: Vec<usize> = [&s.train, &s.valid, &s.test]
                .iter()
                .flat_map(|p| p.graphs().iter().map(|g| g.num_nodes() - 1))
                .collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
        }
    }
}
