// SPDX-License-Identifier: Apache-2.0

//! Multi-class classification measures.
//!
//! Accuracy is micro (trace over total). Sensitivity and specificity are
//! one-vs-rest rates averaged over labels; a label whose rate is undefined
//! (no positives for recall, no negatives for specificity) is left out of the
//! average and listed in [`MacroAverage::excluded`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data_model::CohortLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationTrial {
    sample: String,
    true_label: CohortLabel,
    label_scores: BTreeMap<CohortLabel, f64>,
}

impl ClassificationTrial {
    pub fn new(
        sample: impl Into<String>,
        true_label: CohortLabel,
        label_scores: BTreeMap<CohortLabel, f64>,
    ) -> Result<Self, MetricsError> {
        let sample = sample.into();
        if label_scores.len() < 2 {
            return Err(MetricsError::TooFewLabels(sample));
        }
        if label_scores.values().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteScore(sample));
        }
        if !label_scores.contains_key(&true_label) {
            return Err(MetricsError::UnknownTrueLabel {
                sample,
                label: true_label,
            });
        }
        Ok(ClassificationTrial {
            sample,
            true_label,
            label_scores,
        })
    }

    pub fn sample(&self) -> &str {
        &self.sample
    }

    pub fn true_label(&self) -> &CohortLabel {
        &self.true_label
    }

    pub fn label_scores(&self) -> &BTreeMap<CohortLabel, f64> {
        &self.label_scores
    }
}

/// Highest-scoring label; ties go to the first label in canonical order.
pub fn rank1_prediction(trial: &ClassificationTrial) -> &CohortLabel {
    let mut best: Option<(&CohortLabel, f64)> = None;
    for (label, &score) in &trial.label_scores {
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((label, score)),
        }
    }
    // a trial always carries at least two labels
    best.map(|(l, _)| l).expect("validated trial has labels")
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<CohortLabel>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(labels: Vec<CohortLabel>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let n = labels.len();
        if n == 0 || counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(MetricsError::MalformedMatrix);
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(MetricsError::MalformedMatrix);
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &[CohortLabel] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Each row divided by its sum; rows with no trials stay all zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if sum == 0 { 0.0 } else { c as f64 / sum as f64 })
                    .collect()
            })
            .collect()
    }

    /// Element-wise sum of matrices over the same label list.
    pub fn pooled<'a, I>(matrices: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = &'a ConfusionMatrix>,
    {
        let mut iter = matrices.into_iter();
        let mut acc = iter.next().ok_or(MetricsError::EmptyTrials)?.clone();
        for m in iter {
            if m.labels != acc.labels {
                return Err(MetricsError::InconsistentLabels);
            }
            for (row, other) in acc.counts.iter_mut().zip(&m.counts) {
                for (c, o) in row.iter_mut().zip(other) {
                    *c += o;
                }
            }
        }
        Ok(acc)
    }
}

pub fn confusion_matrix(trials: &[ClassificationTrial]) -> Result<ConfusionMatrix, MetricsError> {
    let first = trials.first().ok_or(MetricsError::EmptyTrials)?;
    let labels: Vec<CohortLabel> = first.label_scores.keys().cloned().collect();
    let index: BTreeMap<&CohortLabel, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    for t in trials {
        if t.label_scores.len() != n || !t.label_scores.keys().all(|l| index.contains_key(l)) {
            return Err(MetricsError::InconsistentLabels);
        }
        counts[index[&t.true_label]][index[rank1_prediction(t)]] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub value: f64,
    /// Per-label rate, `None` where undefined.
    pub per_label: Vec<Option<f64>>,
    /// Labels left out of the average because their rate is undefined.
    pub excluded: Vec<CohortLabel>,
}

fn macro_average(cm: &ConfusionMatrix, per_label: Vec<Option<f64>>) -> Result<MacroAverage, MetricsError> {
    let defined: Vec<f64> = per_label.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let excluded = cm
        .labels
        .iter()
        .zip(&per_label)
        .filter(|(_, v)| v.is_none())
        .map(|(l, _)| l.clone())
        .collect();
    Ok(MacroAverage {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        per_label,
        excluded,
    })
}

/// Per-label recall TP / (TP + FN), i.e. the diagonal of the row-normalised matrix.
pub fn per_label_recall(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    cm.row_sums()
        .iter()
        .enumerate()
        .map(|(i, &support)| (support > 0).then(|| cm.counts[i][i] as f64 / support as f64))
        .collect()
}

/// Per-label true-negative rate TN / (TN + FP), one label against the rest.
pub fn per_label_specificity(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    let total = cm.total();
    let row_sums = cm.row_sums();
    (0..cm.labels.len())
        .map(|i| {
            let negatives = total - row_sums[i];
            let false_pos: u64 = (0..cm.labels.len()).filter(|&r| r != i).map(|r| cm.counts[r][i]).sum();
            (negatives > 0).then(|| (negatives - false_pos) as f64 / negatives as f64)
        })
        .collect()
}

pub fn sensitivity_macro(cm: &ConfusionMatrix) -> Result<MacroAverage, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    macro_average(cm, per_label_recall(cm))
}

pub fn specificity_macro(cm: &ConfusionMatrix) -> Result<MacroAverage, MetricsError> {
    if cm.labels.len() < 2 {
        return Err(MetricsError::SingleClass);
    }
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    macro_average(cm, per_label_specificity(cm))
}
