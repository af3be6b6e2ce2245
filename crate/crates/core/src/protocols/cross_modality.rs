// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{identify, Classifier, Execution, FittedModel, GroupKey, ProtocolError, RankedReliabilityCube};
use crate::data_model::{DatasetManifest, Modality, SampleRecord};
use crate::metrics::{cmc_curve, tpir, CmcPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityCellRun {
    pub train: Modality,
    pub test: Modality,
    pub probes: usize,
    pub cmc: Vec<CmcPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossModalityOutcome {
    pub cube: RankedReliabilityCube,
    /// Row-major over (train, test).
    pub cells: Vec<ModalityCellRun>,
}

/// Train on each modality, identify every other modality's probes against
/// that gallery, and record TPIR at each requested rank.
///
/// Uses the classifier's default (first) hyperparameter setting; there is no
/// validation partition in this design.
pub fn cross_modality_identification<C: Classifier>(
    manifest: &DatasetManifest,
    classifier: &C,
    ranks: &[usize],
    exec: Execution,
) -> Result<CrossModalityOutcome, ProtocolError> {
    let mut ranks = ranks.to_vec();
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.is_empty() || ranks[0] == 0 {
        return Err(ProtocolError::InvalidRanks(ranks));
    }

    let mut by_modality: BTreeMap<Modality, Vec<&SampleRecord>> = BTreeMap::new();
    for s in manifest.samples() {
        by_modality.entry(s.modality.clone()).or_default().push(s);
    }
    if by_modality.len() < 2 {
        return Err(ProtocolError::TooFewModalities(by_modality.len()));
    }
    let subjects = manifest.subjects();
    for (modality, samples) in &by_modality {
        let present: BTreeSet<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
        if let Some(missing) = subjects.iter().find(|s| !present.contains(*s)) {
            return Err(ProtocolError::CoverageGap {
                subject: missing.to_string(),
                modality: modality.to_string(),
            });
        }
    }
    let params = classifier
        .param_grid()
        .into_iter()
        .next()
        .ok_or(ProtocolError::EmptyParamGrid)?;
    let modalities: Vec<Modality> = by_modality.keys().cloned().collect();

    let models: Vec<C::Model> = exec
        .map(&modalities, |m| {
            classifier.fit(&by_modality[m], GroupKey::Subject, &params)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;

    let pairs: Vec<(usize, usize)> = (0..modalities.len())
        .flat_map(|i| (0..modalities.len()).map(move |j| (i, j)))
        .collect();
    let run_cell = |&(i, j): &(usize, usize)| -> Result<(Vec<f64>, ModalityCellRun), ProtocolError> {
        let trials = identify(&models[i], &by_modality[&modalities[j]])?;
        let values = ranks.iter().map(|&r| tpir(&trials, r)).collect::<Result<Vec<_>, _>>()?;
        Ok((
            values,
            ModalityCellRun {
                train: modalities[i].clone(),
                test: modalities[j].clone(),
                probes: trials.len(),
                cmc: cmc_curve(&trials, models[i].keys().len())?,
            },
        ))
    };
    let results: Vec<(Vec<f64>, ModalityCellRun)> = exec.map(&pairs, run_cell).into_iter().collect::<Result<_, _>>()?;

    let n = modalities.len();
    let mut panels = vec![vec![vec![0.0; n]; n]; ranks.len()];
    let mut cells = Vec::with_capacity(results.len());
    for (&(i, j), (values, cell)) in pairs.iter().zip(results) {
        for (k, v) in values.into_iter().enumerate() {
            panels[k][i][j] = v;
        }
        cells.push(cell);
    }
    let labels: Vec<String> = modalities.iter().map(|m| m.to_string()).collect();
    let cube = RankedReliabilityCube::new(ranks, labels.clone(), labels, panels)?;
    Ok(CrossModalityOutcome { cube, cells })
}
