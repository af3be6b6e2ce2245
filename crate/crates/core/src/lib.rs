// SPDX-License-Identifier: Apache-2.0

//! Evaluation toolkit for biometric-enabled decision support.
//!
//! Measures reliability as true positive identification rate (TPIR) and CMC
//! curves, cost-weighted risk of error from sensitivity and specificity, and
//! trust change as the signed difference in reliability between two operating
//! conditions. Cohort- and modality-partitioned reliability matrices expose
//! bias that an overall average hides.
//!
//! Modules:
//! * [`data_model`]: manifests, sample records, partitions.
//! * [`metrics`]: the measures themselves, all pure.
//! * [`protocols`]: emotion-fold and cross-modality identification,
//!   subject-fold classification, over any [`protocols::Classifier`].
//! * [`baseline`]: nearest-centroid classifier over embeddings.
//! * [`synthetic`]: seeded Gaussian-cluster datasets.
//! * [`io`], [`report`], [`cli`]: file formats, reports, command line.

pub mod baseline;
pub mod cli;
pub mod data_model;
pub mod io;
pub mod metrics;
pub mod protocols;
pub mod report;
pub mod synthetic;
