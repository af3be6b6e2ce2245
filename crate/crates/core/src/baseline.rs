// SPDX-License-Identifier: Apache-2.0

//! Nearest-centroid classifier over embeddings.
//!
//! One centroid per key (subject or cohort), the arithmetic mean of that
//! key's feature vectors. Scores are cosine similarity or negated euclidean
//! distance. A zero-norm vector has cosine similarity 0 with everything.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_model::{CohortLabel, SampleRecord};
use crate::metrics::{candidate_order, Candidate};
use crate::protocols::{Classifier, ClassifierError, FittedModel, GroupKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Cosine,
    Euclidean,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(DistanceMetric::Cosine),
            "euclidean" => Ok(DistanceMetric::Euclidean),
            other => Err(format!("unknown metric `{other}` (expected cosine or euclidean)")),
        }
    }
}

impl DistanceMetric {
    pub fn similarity(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::Cosine => {
                let mut dot = 0.0;
                let mut na = 0.0;
                let mut nb = 0.0;
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na.sqrt() * nb.sqrt())
                }
            }
            DistanceMetric::Euclidean => -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    key: GroupKey,
    metric: DistanceMetric,
    dim: usize,
    keys: Vec<String>,
    centroids: Vec<Vec<f64>>,
}

impl CentroidModel {
    pub fn fit(samples: &[&SampleRecord], key: GroupKey, metric: DistanceMetric) -> Result<Self, ClassifierError> {
        let first = samples.first().ok_or(ClassifierError::EmptyTraining)?;
        let dim = first.features.len();
        let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
        for s in samples {
            if s.features.len() != dim {
                return Err(ClassifierError::DimensionMismatch {
                    expected: dim,
                    found: s.features.len(),
                });
            }
            let k = match key {
                GroupKey::Subject => s.subject_id.as_str(),
                GroupKey::Cohort => s.cohort.as_str(),
            };
            let entry = sums.entry(k).or_insert_with(|| (vec![0.0; dim], 0));
            for (acc, v) in entry.0.iter_mut().zip(&s.features) {
                *acc += v;
            }
            entry.1 += 1;
        }
        let mut keys = Vec::with_capacity(sums.len());
        let mut centroids = Vec::with_capacity(sums.len());
        for (k, (sum, n)) in sums {
            keys.push(k.to_string());
            centroids.push(sum.into_iter().map(|v| v / n as f64).collect());
        }
        Ok(CentroidModel {
            key,
            metric,
            dim,
            keys,
            centroids,
        })
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, key: &str) -> Option<&[f64]> {
        let i = self.keys.binary_search_by(|k| k.as_str().cmp(key)).ok()?;
        Some(&self.centroids[i])
    }

    fn scores(&self, probe: &[f64]) -> Result<Vec<Candidate>, ClassifierError> {
        if probe.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: probe.len(),
            });
        }
        if probe.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteProbe);
        }
        Ok(self
            .keys
            .iter()
            .zip(&self.centroids)
            .map(|(k, c)| Candidate::new(k.clone(), self.metric.similarity(probe, c)))
            .collect())
    }

    /// Every gallery key by descending similarity, ties by key ascending.
    pub fn rank_candidates(&self, probe: &[f64]) -> Result<Vec<Candidate>, ClassifierError> {
        let mut out = self.scores(probe)?;
        out.sort_by(candidate_order);
        Ok(out)
    }
}

impl FittedModel for CentroidModel {
    fn keys(&self) -> Vec<String> {
        self.keys.clone()
    }

    fn rank(&self, probe: &[f64]) -> Result<Vec<Candidate>, ClassifierError> {
        self.rank_candidates(probe)
    }

    fn classify(&self, probe: &[f64]) -> Result<BTreeMap<CohortLabel, f64>, ClassifierError> {
        if self.key != GroupKey::Cohort {
            return Err(ClassifierError::WrongKey(self.key));
        }
        self.scores(probe)?
            .into_iter()
            .map(|c| {
                let label = CohortLabel::new(&c.subject_id).map_err(|e| ClassifierError::Other(e.to_string()))?;
                Ok((label, c.score))
            })
            .collect()
    }
}

/// Nearest-centroid classifier whose validation grid is a list of metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidClassifier {
    metrics: Vec<DistanceMetric>,
}

impl Default for CentroidClassifier {
    fn default() -> Self {
        CentroidClassifier {
            metrics: vec![DistanceMetric::Cosine, DistanceMetric::Euclidean],
        }
    }
}

impl CentroidClassifier {
    /// Restricts the grid to a single metric.
    pub fn with_metric(metric: DistanceMetric) -> Self {
        CentroidClassifier { metrics: vec![metric] }
    }
}

impl Classifier for CentroidClassifier {
    type Params = DistanceMetric;
    type Model = CentroidModel;

    fn param_grid(&self) -> Vec<DistanceMetric> {
        self.metrics.clone()
    }

    fn fit(
        &self,
        samples: &[&SampleRecord],
        key: GroupKey,
        params: &DistanceMetric,
    ) -> Result<CentroidModel, ClassifierError> {
        CentroidModel::fit(samples, key, *params)
    }
}
