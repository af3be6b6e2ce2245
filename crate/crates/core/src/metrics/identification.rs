// SPDX-License-Identifier: Apache-2.0

//! Closed-set identification: true positive identification rate and the
//! cumulative matching characteristic.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subject_id: String,
    pub score: f64,
}

impl Candidate {
    pub fn new(subject_id: impl Into<String>, score: f64) -> Self {
        Candidate {
            subject_id: subject_id.into(),
            score,
        }
    }
}

/// Orders candidates by score descending, then subject id ascending.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.subject_id.cmp(&b.subject_id))
}

/// One probe search against a gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationTrial {
    probe_sample: String,
    true_subject: String,
    candidates: Vec<Candidate>,
}

impl IdentificationTrial {
    /// Validates the candidate list and puts it in canonical rank order.
    pub fn new(
        probe_sample: impl Into<String>,
        true_subject: impl Into<String>,
        mut candidates: Vec<Candidate>,
    ) -> Result<Self, MetricsError> {
        let probe_sample = probe_sample.into();
        if candidates.is_empty() {
            return Err(MetricsError::EmptyCandidates(probe_sample));
        }
        if candidates.iter().any(|c| !c.score.is_finite()) {
            return Err(MetricsError::NonFiniteScore(probe_sample));
        }
        let mut seen = BTreeSet::new();
        for c in &candidates {
            if !seen.insert(c.subject_id.as_str()) {
                return Err(MetricsError::DuplicateCandidate {
                    probe: probe_sample,
                    subject: c.subject_id.clone(),
                });
            }
        }
        candidates.sort_by(candidate_order);
        Ok(IdentificationTrial {
            probe_sample,
            true_subject: true_subject.into(),
            candidates,
        })
    }

    pub fn probe_sample(&self) -> &str {
        &self.probe_sample
    }

    pub fn true_subject(&self) -> &str {
        &self.true_subject
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    /// 1-based rank of the true subject, `None` if it is not in the list.
    pub fn true_rank(&self) -> Option<usize> {
        self.candidates
            .iter()
            .position(|c| c.subject_id == self.true_subject)
            .map(|p| p + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmcPoint {
    pub rank: usize,
    pub tpir: f64,
}

/// Fraction of searches whose true subject is within the top `rank` candidates.
pub fn tpir(trials: &[IdentificationTrial], rank: usize) -> Result<f64, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::EmptyTrials);
    }
    if rank == 0 {
        return Err(MetricsError::ZeroRank);
    }
    let outside = trials.iter().filter(|t| t.true_rank().is_none_or(|r| r > rank)).count();
    Ok(1.0 - outside as f64 / trials.len() as f64)
}

/// TPIR at every rank 1..=max_rank. Built from one pass over the trials;
/// each point equals `tpir(trials, r)` exactly.
pub fn cmc_curve(trials: &[IdentificationTrial], max_rank: usize) -> Result<Vec<CmcPoint>, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::EmptyTrials);
    }
    if max_rank == 0 {
        return Err(MetricsError::ZeroRank);
    }
    // hits_at[r] = trials whose true rank is exactly r
    let mut hits_at = vec![0usize; max_rank + 1];
    for t in trials {
        if let Some(r) = t.true_rank() {
            if r <= max_rank {
                hits_at[r] += 1;
            }
        }
    }
    let n = trials.len();
    let mut inside = 0;
    Ok((1..=max_rank)
        .map(|rank| {
            inside += hits_at[rank];
            CmcPoint {
                rank,
                tpir: 1.0 - (n - inside) as f64 / n as f64,
            }
        })
        .collect())
}
