// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{identify, Classifier, Execution, FittedModel, GroupKey, ProtocolError, ReliabilityMatrix};
use crate::data_model::{partition_by_cohort, CohortLabel, DatasetManifest, SampleRecord};
use crate::metrics::{cmc_curve, tpir, CmcPoint};

/// Provenance and results of one (test, validation) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortCellRun {
    pub test: CohortLabel,
    pub validation: CohortLabel,
    pub training: Vec<CohortLabel>,
    /// Display form of the hyperparameters chosen on the validation cohort.
    pub selected_params: String,
    pub validation_tpir: f64,
    pub test_tpir: f64,
    pub cmc: Vec<CmcPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionFoldOutcome {
    /// Rows are test cohorts, columns validation cohorts.
    pub matrix: ReliabilityMatrix,
    /// Row-major over (test, validation), diagonal skipped.
    pub cells: Vec<CohortCellRun>,
}

/// Leave-two-cohorts-out identification.
///
/// For every ordered pair (test `t`, validation `v`), `t != v`, each
/// hyperparameter setting is fitted on the remaining cohorts (subject keyed),
/// the setting with the best rank-1 TPIR on `v` is kept (first on ties), and
/// its rank-1 TPIR on `t` fills cell (t, v).
pub fn emotion_fold_identification<C: Classifier>(
    manifest: &DatasetManifest,
    classifier: &C,
    exec: Execution,
) -> Result<EmotionFoldOutcome, ProtocolError> {
    let buckets = partition_by_cohort(manifest);
    if buckets.len() < 3 {
        return Err(ProtocolError::TooFewCohorts {
            needed: 3,
            found: buckets.len(),
        });
    }
    let grid = classifier.param_grid();
    if grid.is_empty() {
        return Err(ProtocolError::EmptyParamGrid);
    }
    let cohorts: Vec<CohortLabel> = buckets.keys().cloned().collect();
    let pairs: Vec<(usize, usize)> = (0..cohorts.len())
        .flat_map(|t| (0..cohorts.len()).filter(move |&v| v != t).map(move |v| (t, v)))
        .collect();

    let run_cell = |&(t, v): &(usize, usize)| -> Result<CohortCellRun, ProtocolError> {
        let test = &cohorts[t];
        let validation = &cohorts[v];
        let training: Vec<CohortLabel> = cohorts
            .iter()
            .filter(|c| *c != test && *c != validation)
            .cloned()
            .collect();
        let train: Vec<&SampleRecord> = manifest
            .samples()
            .iter()
            .filter(|s| s.cohort != *test && s.cohort != *validation)
            .collect();
        let gallery: BTreeSet<&str> = train.iter().map(|s| s.subject_id.as_str()).collect();
        for probe in buckets[test].iter().chain(&buckets[validation]) {
            if !gallery.contains(probe.subject_id.as_str()) {
                return Err(ProtocolError::GalleryGap {
                    subject: probe.subject_id.clone(),
                    test: probe.cohort.to_string(),
                });
            }
        }

        let mut best: Option<(usize, f64, C::Model)> = None;
        for (i, params) in grid.iter().enumerate() {
            let model = classifier.fit(&train, GroupKey::Subject, params)?;
            let score = tpir(&identify(&model, &buckets[validation])?, 1)?;
            if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
                best = Some((i, score, model));
            }
        }
        let (chosen, validation_tpir, model) = best.expect("non-empty grid");
        let trials = identify(&model, &buckets[test])?;
        let gallery_size = model.keys().len();
        Ok(CohortCellRun {
            test: test.clone(),
            validation: validation.clone(),
            training,
            selected_params: grid[chosen].to_string(),
            validation_tpir,
            test_tpir: tpir(&trials, 1)?,
            cmc: cmc_curve(&trials, gallery_size)?,
        })
    };

    let cells: Vec<CohortCellRun> = exec.map(&pairs, run_cell).into_iter().collect::<Result<_, _>>()?;

    let n = cohorts.len();
    let mut grid_cells = vec![vec![None; n]; n];
    for (&(t, v), cell) in pairs.iter().zip(&cells) {
        grid_cells[t][v] = Some(cell.test_tpir);
    }
    let labels: Vec<String> = cohorts.iter().map(|c| c.to_string()).collect();
    let matrix = ReliabilityMatrix::new(labels.clone(), labels, grid_cells, true)?;
    Ok(EmotionFoldOutcome { matrix, cells })
}
