// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::data_model::{CohortLabel, SampleRecord};
use crate::metrics::Candidate;

/// What a fitted model groups its training samples by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Subject,
    Cohort,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("no training samples")]
    EmptyTraining,
    #[error("feature dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("probe has a non-finite feature")]
    NonFiniteProbe,
    #[error("model is keyed by {0:?}; this operation needs the other key")]
    WrongKey(GroupKey),
    #[error("{0}")]
    Other(String),
}

/// A pluggable classifier the protocols drive.
///
/// `param_grid` lists the hyperparameter settings the validation step may
/// choose from, in preference order; the first entry is the default.
pub trait Classifier: Sync {
    type Params: Clone + fmt::Display + Send + Sync;
    type Model: FittedModel + Send + Sync;

    fn param_grid(&self) -> Vec<Self::Params>;

    fn fit(
        &self,
        samples: &[&SampleRecord],
        key: GroupKey,
        params: &Self::Params,
    ) -> Result<Self::Model, ClassifierError>;
}

/// An immutable fitted model.
pub trait FittedModel {
    /// Gallery keys (subject ids or cohort names) in canonical order.
    fn keys(&self) -> Vec<String>;

    /// Gallery subjects ordered by score descending, ties by subject id ascending.
    fn rank(&self, probe: &[f64]) -> Result<Vec<Candidate>, ClassifierError>;

    /// Similarity score per cohort label.
    fn classify(&self, probe: &[f64]) -> Result<BTreeMap<CohortLabel, f64>, ClassifierError>;
}
