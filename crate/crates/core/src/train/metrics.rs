use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "roc")]
    RocAuc,
    #[serde(rename = "prc")]
    PrcAuc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::RocAuc => "roc",
            Metric::PrcAuc => "prc",
        }
    }

    pub fn compute(self, scores: &[f64], labels: &[bool]) -> Option<f64> {
        match self {
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::PrcAuc => prc_auc(scores, labels),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roc" => Ok(Metric::RocAuc),
            "prc" => Ok(Metric::PrcAuc),
            _ => Err(Error::InvalidArgument(format!(
                "unknown metric `{s}` (expected roc or prc)"
            ))),
        }
    }
}

/// Runs of equal scores in descending order, as `(positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut prev: Option<f64> = None;
    for i in order {
        if prev != Some(scores[i]) {
            groups.push((0, 0));
            prev = Some(scores[i]);
        }
        let g = groups.last_mut().expect("pushed above");
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half. `None` unless both
/// classes are present.
///
/// # Panics
/// If `scores` and `labels` differ in length.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "roc_auc: length mismatch");
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    // walk from the lowest score up; every positive beats the negatives
    // already seen and ties half of its own group's negatives
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    for &(p, n) in tie_groups(scores, labels).iter().rev() {
        wins += p as f64 * neg_below as f64 + 0.5 * (p * n) as f64;
        neg_below += n;
    }
    Some(wins / (pos as f64 * neg as f64))
}

/// Average precision: recall-weighted precision over the distinct score
/// thresholds, highest first, with tied scores entering together. `None`
/// without positives.
///
/// # Panics
/// If `scores` and `labels` differ in length.
pub fn prc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "prc_auc: length mismatch");
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return None;
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in tie_groups(scores, labels) {
        tp += p;
        seen += p + n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Some(ap)
}

/// Sample mean and standard deviation (`n - 1` denominator, 0 for a single
/// value). `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some((mean, std))
}
