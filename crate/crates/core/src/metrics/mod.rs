// SPDX-License-Identifier: Apache-2.0

//! Pure measures: TPIR/CMC, confusion matrices and derived rates, risk,
//! trust change and fold aggregation.

mod classification;
mod identification;
mod measures;

pub use classification::{
    accuracy, confusion_matrix, per_label_recall, per_label_specificity, rank1_prediction, sensitivity_macro,
    specificity_macro, ClassificationTrial, ConfusionMatrix, MacroAverage,
};
pub use identification::{candidate_order, cmc_curve, tpir, Candidate, CmcPoint, IdentificationTrial};
pub use measures::{
    aggregate_mean_std, bias_trust, cohort_decomposition, risk_error, risk_from_rates, CohortDecomposition,
    CohortExtreme, MetricSummary, RiskParams,
};

use thiserror::Error;

use crate::data_model::CohortLabel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no trials")]
    EmptyTrials,
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("probe `{0}` has an empty candidate list")]
    EmptyCandidates(String),
    #[error("`{0}` has a non-finite score")]
    NonFiniteScore(String),
    #[error("probe `{probe}` lists subject `{subject}` more than once")]
    DuplicateCandidate { probe: String, subject: String },
    #[error("sample `{0}` needs scores for at least two labels")]
    TooFewLabels(String),
    #[error("sample `{sample}` has true label `{label}` outside its score map")]
    UnknownTrueLabel { sample: String, label: CohortLabel },
    #[error("trials do not share one label universe")]
    InconsistentLabels,
    #[error("confusion matrix is not square over distinct labels")]
    MalformedMatrix,
    #[error("confusion matrix has no defined entries")]
    EmptyMatrix,
    #[error("specificity is undefined with a single class")]
    SingleClass,
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("cost {name} = {value} must be finite and non-negative")]
    InvalidCost { name: &'static str, value: f64 },
    #[error("no fold values")]
    EmptyFolds,
    #[error("no cohort values")]
    EmptyCohorts,
    #[error("non-finite value")]
    NonFiniteValue,
}
