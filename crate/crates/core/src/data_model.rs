// SPDX-License-Identifier: Apache-2.0

//! Dataset manifest, sample records and the partitioning utilities shared by
//! every evaluation protocol.
//!
//! A [`DatasetManifest`] is only obtainable through [`validate_manifest`], so
//! holding one means the sample ids are unique, every feature vector is finite
//! and all vectors share one dimension. Samples are stored sorted by
//! `sample_id`, which makes every downstream operation independent of the
//! order records were read in.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("manifest has no records")]
    Empty,
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("{} record(s) rejected; first: {}", .0.len(), .0[0])]
    Rejected(Vec<RecordIssue>),
    #[error("cannot build {k} subject folds from {subjects} subject(s)")]
    TooManyFolds { k: usize, subjects: usize },
    #[error("fold count must be at least 2, got {0}")]
    TooFewFolds(usize),
}

/// Why a single record was rejected during manifest validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordIssue {
    #[error("duplicate sample_id `{sample_id}`")]
    DuplicateSampleId { sample_id: String },
    #[error("sample `{sample_id}` has an empty feature vector")]
    EmptyFeatures { sample_id: String },
    #[error("sample `{sample_id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        sample_id: String,
        expected: usize,
        found: usize,
    },
    #[error("sample `{sample_id}` has a non-finite feature at index {index}")]
    NonFiniteFeature { sample_id: String, index: usize },
    #[error("({subject_id}, {modality}, {cohort}) occurs {count} times, limit is {limit} (sample `{sample_id}`)")]
    TooManyRepeats {
        sample_id: String,
        subject_id: String,
        modality: Modality,
        cohort: CohortLabel,
        count: usize,
        limit: usize,
    },
}

impl RecordIssue {
    pub fn sample_id(&self) -> &str {
        match self {
            RecordIssue::DuplicateSampleId { sample_id }
            | RecordIssue::EmptyFeatures { sample_id }
            | RecordIssue::DimensionMismatch { sample_id, .. }
            | RecordIssue::NonFiniteFeature { sample_id, .. }
            | RecordIssue::TooManyRepeats { sample_id, .. } => sample_id,
        }
    }
}

const KNOWN_MODALITIES: [&str; 4] = ["RGB", "NIR", "IR", "SKETCH"];

/// Imaging band of a sample. Known bands sort first in the order
/// RGB, NIR, IR, SKETCH; any other tag sorts after them alphabetically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Modality(String);

impl Modality {
    pub fn new(tag: &str) -> Result<Self, DataError> {
        let tag = tag.trim();
        if tag.is_empty() {
            return Err(DataError::EmptyLabel);
        }
        Ok(Modality(tag.to_uppercase()))
    }

    pub fn rgb() -> Self {
        Modality("RGB".into())
    }

    pub fn nir() -> Self {
        Modality("NIR".into())
    }

    pub fn ir() -> Self {
        Modality("IR".into())
    }

    pub fn sketch() -> Self {
        Modality("SKETCH".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn known_rank(&self) -> usize {
        KNOWN_MODALITIES
            .iter()
            .position(|m| *m == self.0)
            .unwrap_or(KNOWN_MODALITIES.len())
    }
}

impl Ord for Modality {
    fn cmp(&self, other: &Self) -> Ordering {
        self.known_rank()
            .cmp(&other.known_rank())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Modality {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Modality {
    type Error = DataError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Modality::new(&value)
    }
}

impl From<Modality> for String {
    fn from(value: Modality) -> Self {
        value.0
    }
}

/// Cohort name, e.g. an emotion. Canonical lowercase; ordering is lexicographic
/// on the canonical form and doubles as the tie-break order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CohortLabel(String);

impl CohortLabel {
    pub fn new(name: &str) -> Result<Self, DataError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(DataError::EmptyLabel);
        }
        Ok(CohortLabel(name.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CohortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CohortLabel {
    type Error = DataError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        CohortLabel::new(&value)
    }
}

impl From<CohortLabel> for String {
    fn from(value: CohortLabel) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub modality: Modality,
    pub cohort: CohortLabel,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Maximum number of samples per (subject, modality, cohort); `None` is unbounded.
    pub max_per_combination: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    samples: Vec<SampleRecord>,
    subject_count: usize,
    feature_dim: usize,
}

impl DatasetManifest {
    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn subject_count(&self) -> usize {
        self.subject_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.subject_id.as_str()).collect()
    }

    pub fn cohorts(&self) -> BTreeSet<CohortLabel> {
        self.samples.iter().map(|s| s.cohort.clone()).collect()
    }

    pub fn modalities(&self) -> BTreeSet<Modality> {
        self.samples.iter().map(|s| s.modality.clone()).collect()
    }

    /// Sub-manifest restricted to samples matching `keep`; `None` when nothing matches.
    pub fn filtered<F>(&self, keep: F) -> Option<DatasetManifest>
    where
        F: Fn(&SampleRecord) -> bool,
    {
        let samples: Vec<SampleRecord> = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        if samples.is_empty() {
            return None;
        }
        let subject_count = samples
            .iter()
            .map(|s| s.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        Some(DatasetManifest {
            samples,
            subject_count,
            feature_dim: self.feature_dim,
        })
    }

    pub fn into_samples(self) -> Vec<SampleRecord> {
        self.samples
    }
}

/// Checks every record and builds a manifest, or reports all rejected rows.
///
/// The first record fixes the expected feature dimension.
pub fn validate_manifest(
    raw_records: Vec<SampleRecord>,
    options: ValidationOptions,
) -> Result<DatasetManifest, DataError> {
    if raw_records.is_empty() {
        return Err(DataError::Empty);
    }
    let expected_dim = raw_records[0].features.len();
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    let mut combos: BTreeMap<(String, Modality, CohortLabel), usize> = BTreeMap::new();

    for rec in &raw_records {
        if !seen.insert(rec.sample_id.as_str()) {
            issues.push(RecordIssue::DuplicateSampleId {
                sample_id: rec.sample_id.clone(),
            });
            continue;
        }
        if rec.features.is_empty() {
            issues.push(RecordIssue::EmptyFeatures {
                sample_id: rec.sample_id.clone(),
            });
            continue;
        }
        if rec.features.len() != expected_dim {
            issues.push(RecordIssue::DimensionMismatch {
                sample_id: rec.sample_id.clone(),
                expected: expected_dim,
                found: rec.features.len(),
            });
            continue;
        }
        if let Some(index) = rec.features.iter().position(|v| !v.is_finite()) {
            issues.push(RecordIssue::NonFiniteFeature {
                sample_id: rec.sample_id.clone(),
                index,
            });
            continue;
        }
        let count = combos
            .entry((rec.subject_id.clone(), rec.modality.clone(), rec.cohort.clone()))
            .or_insert(0);
        *count += 1;
        if let Some(limit) = options.max_per_combination {
            if *count > limit {
                issues.push(RecordIssue::TooManyRepeats {
                    sample_id: rec.sample_id.clone(),
                    subject_id: rec.subject_id.clone(),
                    modality: rec.modality.clone(),
                    cohort: rec.cohort.clone(),
                    count: *count,
                    limit,
                });
            }
        }
    }
    if !issues.is_empty() {
        return Err(DataError::Rejected(issues));
    }

    let mut samples = raw_records;
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let subject_count = samples
        .iter()
        .map(|s| s.subject_id.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    Ok(DatasetManifest {
        samples,
        subject_count,
        feature_dim: expected_dim,
    })
}

/// Buckets samples by cohort. Each bucket keeps manifest (sample_id) order.
pub fn partition_by_cohort(manifest: &DatasetManifest) -> BTreeMap<CohortLabel, Vec<&SampleRecord>> {
    let mut buckets: BTreeMap<CohortLabel, Vec<&SampleRecord>> = BTreeMap::new();
    for s in manifest.samples() {
        buckets.entry(s.cohort.clone()).or_default().push(s);
    }
    buckets
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFold<'a> {
    /// Sorted subject ids in this fold.
    pub subjects: Vec<String>,
    pub samples: Vec<&'a SampleRecord>,
}

impl SubjectFold<'_> {
    pub fn contains_subject(&self, subject_id: &str) -> bool {
        self.subjects.binary_search_by(|s| s.as_str().cmp(subject_id)).is_ok()
    }
}

/// Deals subjects into `k` disjoint folds.
///
/// Distinct subject ids are sorted, shuffled with a ChaCha8 stream seeded from
/// `seed`, then dealt round-robin, so fold sizes differ by at most one and the
/// assignment depends only on the subject set, `k` and `seed`.
pub fn partition_by_subject_folds(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<Vec<SubjectFold<'_>>, DataError> {
    if k < 2 {
        return Err(DataError::TooFewFolds(k));
    }
    let mut subjects: Vec<&str> = manifest.subjects().into_iter().collect();
    if k > subjects.len() {
        return Err(DataError::TooManyFolds {
            k,
            subjects: subjects.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);

    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut folds: Vec<SubjectFold> = (0..k)
        .map(|_| SubjectFold {
            subjects: Vec::new(),
            samples: Vec::new(),
        })
        .collect();
    for (i, subject) in subjects.into_iter().enumerate() {
        fold_of.insert(subject, i % k);
        folds[i % k].subjects.push(subject.to_string());
    }
    for fold in &mut folds {
        fold.subjects.sort();
    }
    for s in manifest.samples() {
        folds[fold_of[s.subject_id.as_str()]].samples.push(s);
    }
    Ok(folds)
}
