//! Accuracy under shift and OOD detection quality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeLabels;
use crate::metrics::ShiftType;
use crate::model::{predict_classes, softmax_entropy};
use crate::split::{SplitAssignment, Subset};

/// Fraction of `nodes` whose prediction matches its label.
pub fn accuracy(predictions: &[usize], labels: &NodeLabels, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptySet("node set".into()));
    }
    let correct = nodes
        .iter()
        .filter(|&&i| predictions[i] == labels.get(i))
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

/// Relative change from ID to OOD accuracy in percent; negative when OOD
/// accuracy is lower.
pub fn accuracy_drop(accuracy_id: f64, accuracy_ood: f64) -> Result<f64> {
    if accuracy_id <= 0.0 {
        return Err(Error::ZeroAccuracy);
    }
    Ok(100.0 * (accuracy_ood - accuracy_id) / accuracy_id)
}

/// Area under the ROC curve with `is_ood` as the positive class, computed
/// from ranks. A tied positive/negative pair counts one half.
///
/// The statistic is accumulated as an integer count of half-wins, so the
/// result equals a brute-force pair count exactly.
pub fn auroc(scores: &[f64], is_ood: &[bool]) -> Result<f64> {
    assert_eq!(
        scores.len(),
        is_ood.len(),
        "scores and flags differ in length"
    );
    let positives = is_ood.iter().filter(|&&f| f).count() as u64;
    let negatives = is_ood.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("AUROC scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut half_wins: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut pos, mut neg) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if is_ood[order[end]] {
                pos += 1;
            } else {
                neg += 1;
            }
            end += 1;
        }
        half_wins += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        start = end;
    }
    Ok(half_wins as f64 / (2 * positives * negatives) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub shift_type: ShiftType,
    pub seed: u64,
    pub accuracy_id: f64,
    pub accuracy_ood: f64,
    /// `(accuracy_ood - accuracy_id) / accuracy_id`; absent when ID accuracy
    /// is zero.
    pub relative_drop: Option<f64>,
    pub accuracy_drop_percent: Option<f64>,
    pub auroc: f64,
    pub test_in_size: usize,
    pub test_out_size: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// Accuracy on TestIn and TestOut, and softmax-entropy AUROC over
/// TestIn ∪ TestOut with TestOut positive.
pub fn build_report(
    split: &SplitAssignment,
    labels: &NodeLabels,
    proba: &[Vec<f64>],
) -> Result<EvalReport> {
    if proba.len() != split.num_nodes() {
        return Err(Error::NodeCountMismatch {
            expected: split.num_nodes(),
            found: proba.len(),
        });
    }
    let test_in = split.nodes(Subset::TestIn);
    let test_out = split.nodes(Subset::TestOut);
    if test_in.is_empty() {
        return Err(Error::EmptySet("TestIn subset".into()));
    }
    if test_out.is_empty() {
        return Err(Error::EmptySet("TestOut subset".into()));
    }
    let predictions = predict_classes(proba);
    let accuracy_id = accuracy(&predictions, labels, &test_in)?;
    let accuracy_ood = accuracy(&predictions, labels, &test_out)?;

    let entropy = softmax_entropy(proba);
    let mut scores = Vec::with_capacity(test_in.len() + test_out.len());
    let mut flags = Vec::with_capacity(scores.capacity());
    for &i in &test_in {
        scores.push(entropy[i]);
        flags.push(false);
    }
    for &i in &test_out {
        scores.push(entropy[i]);
        flags.push(true);
    }
    let auroc = auroc(&scores, &flags)?;
    let percent = accuracy_drop(accuracy_id, accuracy_ood).ok();

    Ok(EvalReport {
        shift_type: split.metadata.shift_type,
        seed: split.metadata.config.seed,
        accuracy_id,
        accuracy_ood,
        relative_drop: percent.map(|p| p / 100.0),
        accuracy_drop_percent: percent,
        auroc,
        test_in_size: test_in.len(),
        test_out_size: test_out.len(),
        metadata: BTreeMap::new(),
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per (dataset, shift, seed).
pub fn runs_csv(dataset: &str, reports: &[EvalReport]) -> String {
    let mut out =
        String::from("dataset,shift,seed,accuracy_id,accuracy_ood,accuracy_drop_percent,auroc\n");
    for r in reports {
        let drop = r
            .accuracy_drop_percent
            .map_or(String::new(), |d| d.to_string());
        out.push_str(&format!(
            "{dataset},{},{},{},{},{drop},{}\n",
            r.shift_type, r.seed, r.accuracy_id, r.accuracy_ood, r.auroc
        ));
    }
    out
}

/// Mean and standard deviation over seeds for every shift, in the order the
/// shifts first appear.
pub fn summary_csv(dataset: &str, reports: &[EvalReport]) -> String {
    let mut shifts: Vec<ShiftType> = Vec::new();
    for r in reports {
        if !shifts.contains(&r.shift_type) {
            shifts.push(r.shift_type);
        }
    }
    let mut out = String::from(
        "dataset,shift,runs,accuracy_id_mean,accuracy_id_std,accuracy_ood_mean,accuracy_ood_std,\
         accuracy_drop_percent_mean,accuracy_drop_percent_std,auroc_mean,auroc_std\n",
    );
    for shift in shifts {
        let runs: Vec<&EvalReport> = reports.iter().filter(|r| r.shift_type == shift).collect();
        let column = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> String {
            let values: Vec<f64> = runs.iter().filter_map(|r| f(r)).collect();
            if values.is_empty() {
                return ",".into();
            }
            let (m, s) = mean_std(&values);
            format!("{m},{s}")
        };
        out.push_str(&format!(
            "{dataset},{shift},{},{},{},{},{}\n",
            runs.len(),
            column(&|r| Some(r.accuracy_id)),
            column(&|r| Some(r.accuracy_ood)),
            column(&|r| r.accuracy_drop_percent),
            column(&|r| Some(r.auroc)),
        ));
    }
    out
}
