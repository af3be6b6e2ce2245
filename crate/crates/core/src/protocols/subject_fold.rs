// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Classifier, Execution, FittedModel, GroupKey, ProtocolError};
use crate::data_model::{partition_by_subject_folds, CohortLabel, DatasetManifest, SampleRecord};
use crate::metrics::{
    accuracy, aggregate_mean_std, confusion_matrix, per_label_recall, sensitivity_macro, specificity_macro,
    ClassificationTrial, ConfusionMatrix, MetricSummary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRun {
    pub index: usize,
    pub test_subjects: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationOutcome {
    pub labels: Vec<CohortLabel>,
    pub folds: Vec<FoldRun>,
    pub accuracy: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    /// Sum of the per-fold matrices.
    pub pooled: ConfusionMatrix,
    /// Diagonal of the row-normalised pooled matrix.
    pub per_class_recall: Vec<Option<f64>>,
}

/// Subject-disjoint k-fold cohort classification restricted to `label_set`.
///
/// Each fold's held-out subjects are classified by a cohort-keyed model
/// fitted on every other fold, using the classifier's default setting.
pub fn subject_fold_classification<C: Classifier>(
    manifest: &DatasetManifest,
    classifier: &C,
    k: usize,
    seed: u64,
    label_set: &[CohortLabel],
    exec: Execution,
) -> Result<ClassificationOutcome, ProtocolError> {
    let labels: Vec<CohortLabel> = label_set.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if labels.len() < 2 {
        return Err(ProtocolError::TooFewLabels(labels.len()));
    }
    let present = manifest.cohorts();
    if let Some(missing) = labels.iter().find(|l| !present.contains(*l)) {
        return Err(ProtocolError::UnknownLabel(missing.to_string()));
    }
    let restricted = manifest
        .filtered(|s| labels.binary_search(&s.cohort).is_ok())
        .expect("labels are present");
    let folds = partition_by_subject_folds(&restricted, k, seed)?;
    let params = classifier
        .param_grid()
        .into_iter()
        .next()
        .ok_or(ProtocolError::EmptyParamGrid)?;

    let indices: Vec<usize> = (0..folds.len()).collect();
    let run_fold = |&i: &usize| -> Result<FoldRun, ProtocolError> {
        let held_out = &folds[i];
        let train: Vec<&SampleRecord> = restricted
            .samples()
            .iter()
            .filter(|s| !held_out.contains_subject(&s.subject_id))
            .collect();
        let model = classifier.fit(&train, GroupKey::Cohort, &params)?;
        let keys = model.keys();
        if let Some(missing) = labels.iter().find(|l| !keys.iter().any(|k| k == l.as_str())) {
            return Err(ProtocolError::UnknownLabel(format!(
                "{missing} (absent from fold {i} training)"
            )));
        }
        let trials = held_out
            .samples
            .iter()
            .map(|s| {
                Ok(ClassificationTrial::new(
                    s.sample_id.clone(),
                    s.cohort.clone(),
                    model.classify(&s.features)?,
                )?)
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        let cm = confusion_matrix(&trials)?;
        Ok(FoldRun {
            index: i,
            test_subjects: held_out.subjects.clone(),
            accuracy: accuracy(&cm)?,
            sensitivity: sensitivity_macro(&cm)?.value,
            specificity: specificity_macro(&cm)?.value,
            confusion: cm,
        })
    };
    let fold_runs: Vec<FoldRun> = exec.map(&indices, run_fold).into_iter().collect::<Result<_, _>>()?;

    let collect = |f: fn(&FoldRun) -> f64| fold_runs.iter().map(f).collect::<Vec<_>>();
    let pooled = ConfusionMatrix::pooled(fold_runs.iter().map(|f| &f.confusion))?;
    Ok(ClassificationOutcome {
        accuracy: aggregate_mean_std(&collect(|f| f.accuracy))?,
        sensitivity: aggregate_mean_std(&collect(|f| f.sensitivity))?,
        specificity: aggregate_mean_std(&collect(|f| f.specificity))?,
        per_class_recall: per_label_recall(&pooled),
        labels,
        folds: fold_runs,
        pooled,
    })
}
