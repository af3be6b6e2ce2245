// SPDX-License-Identifier: Apache-2.0

//! The three evaluation designs, run over any [`Classifier`]:
//!
//! * [`emotion_fold_identification`]: leave-two-cohorts-out identification,
//!   one cohort tested and one used for model selection, producing a
//!   test × validation reliability matrix with the diagonal excluded.
//! * [`cross_modality_identification`]: train on one modality, identify
//!   probes from another, TPIR at several ranks.
//! * [`subject_fold_classification`]: subject-disjoint k-fold cohort
//!   classification with accuracy, sensitivity and specificity per fold.
//!
//! Cells and folds are independent and may run on a rayon pool; results are
//! written into position-addressed slots so the output does not depend on
//! scheduling.

mod classifier;
mod cross_modality;
mod emotion_fold;
mod matrix;
mod subject_fold;

pub use classifier::{Classifier, ClassifierError, FittedModel, GroupKey};
pub use cross_modality::{cross_modality_identification, CrossModalityOutcome, ModalityCellRun};
pub use emotion_fold::{emotion_fold_identification, CohortCellRun, EmotionFoldOutcome};
pub use matrix::{trust_delta_report, CubeCondition, RankedReliabilityCube, ReliabilityMatrix};
pub use subject_fold::{subject_fold_classification, ClassificationOutcome, FoldRun};

use rayon::prelude::*;
use thiserror::Error;

use crate::data_model::{DataError, SampleRecord};
use crate::metrics::{IdentificationTrial, MetricsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("need at least {needed} cohorts, found {found}")]
    TooFewCohorts { needed: usize, found: usize },
    #[error("need at least 2 modalities, found {0}")]
    TooFewModalities(usize),
    #[error("subject `{subject}` has no training samples when testing on `{test}` (gallery gap)")]
    GalleryGap { subject: String, test: String },
    #[error("subject `{subject}` has no samples in modality `{modality}`")]
    CoverageGap { subject: String, modality: String },
    #[error("label `{0}` does not occur in the dataset")]
    UnknownLabel(String),
    #[error("need at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("invalid rank list {0:?}")]
    InvalidRanks(Vec<usize>),
    #[error("no cell for condition {0}")]
    MissingCell(String),
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("classifier param grid is empty")]
    EmptyParamGrid,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// How independent cells and folds are scheduled. Both modes produce
/// identical results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    pub(crate) fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Parallel => items.par_iter().map(f).collect(),
            Execution::Sequential => items.iter().map(f).collect(),
        }
    }
}

/// Runs every probe through the model's ranking.
pub(crate) fn identify<M: FittedModel>(
    model: &M,
    probes: &[&SampleRecord],
) -> Result<Vec<IdentificationTrial>, ProtocolError> {
    probes
        .iter()
        .map(|p| {
            let candidates = model.rank(&p.features)?;
            Ok(IdentificationTrial::new(
                p.sample_id.clone(),
                p.subject_id.clone(),
                candidates,
            )?)
        })
        .collect()
}
