// SPDX-License-Identifier: Apache-2.0

//! Seeded Gaussian-cluster embedding datasets shaped like a multi-sensor face
//! database: subjects × modalities × cohorts.
//!
//! Distances are in units of the base within-cluster σ (= 1).
//!
//! * Subject centers: each subject draws one latent center per modality,
//!   `z_k ~ N(0, τ² I)` with `τ = subject_separation / sqrt(2 · feature_dim)`,
//!   so two subjects' centers are `subject_separation` apart on average. The
//!   center seen in modality `m` is `Σ_k L[m][k] · z_k`, where `L` is the
//!   (semi-definite) Cholesky factor of `modality_correlation`. Correlation 1
//!   yields identical centers, 0 independent ones.
//! * Cohort offsets: mutually orthogonal directions (Gram-Schmidt on seeded
//!   Gaussian vectors) scaled to `cohort_offset[c]`, defaulting to
//!   `cohort_separation / sqrt(2)`, so two default cohorts sit
//!   `cohort_separation` apart.
//! * Samples: `center + offset + within_sigma · (1 + cohort_noise[c]) · N(0, I)`.
//!
//! Randomness for subject `i` comes from its own ChaCha8 stream derived from
//! `(seed, i)`, so output does not depend on generation order.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{
    validate_manifest, CohortLabel, DataError, DatasetManifest, Modality, SampleRecord, ValidationOptions,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid modality correlation matrix: {0}")]
    Correlation(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn default_one() -> f64 {
    1.0
}

fn default_reps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub subject_count: usize,
    pub cohorts: Vec<String>,
    pub modalities: Vec<String>,
    pub feature_dim: usize,
    /// Mean distance between two subjects' centers.
    pub subject_separation: f64,
    /// Symmetric, unit diagonal, entries in [0, 1], positive semi-definite.
    /// Empty means the identity (independent modalities).
    #[serde(default)]
    pub modality_correlation: Vec<Vec<f64>>,
    /// Extra noise per cohort, as a multiple of the base σ.
    #[serde(default)]
    pub cohort_noise: BTreeMap<String, f64>,
    /// Distance between two cohorts' offsets when neither is overridden.
    #[serde(default)]
    pub cohort_separation: f64,
    /// Per-cohort offset length, overriding `cohort_separation / sqrt(2)`.
    #[serde(default)]
    pub cohort_offset: BTreeMap<String, f64>,
    #[serde(default = "default_one")]
    pub within_sigma: f64,
    #[serde(default = "default_reps")]
    pub samples_per_cell: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// 113 subjects, five expressions, four sensors; RGB and NIR share
    /// subject structure, IR and sketch are independent.
    pub fn four_sensor(seed: u64) -> Self {
        SynthConfig {
            subject_count: 113,
            cohorts: ["neutral", "smile", "sleepy", "shock", "sunglasses"]
                .map(String::from)
                .to_vec(),
            modalities: ["RGB", "NIR", "IR", "SKETCH"].map(String::from).to_vec(),
            feature_dim: 32,
            subject_separation: 12.0,
            modality_correlation: vec![
                vec![1.0, 0.95, 0.0, 0.0],
                vec![0.95, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            cohort_noise: BTreeMap::new(),
            cohort_separation: 3.0,
            cohort_offset: BTreeMap::new(),
            within_sigma: 1.0,
            samples_per_cell: 1,
            seed,
        }
    }

    pub fn expected_len(&self) -> usize {
        self.subject_count * self.modalities.len() * self.cohorts.len() * self.samples_per_cell
    }
}

/// Lower-triangular `L` with `L Lᵀ = corr`, tolerating singular matrices.
pub fn correlation_loadings(corr: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SynthError> {
    const EPS: f64 = 1e-10;
    let n = corr.len();
    let bad = |msg: String| Err(SynthError::Correlation(msg));
    for (i, row) in corr.iter().enumerate() {
        if row.len() != n {
            return bad(format!("row {i} has {} entries, expected {n}", row.len()));
        }
        if row[i] != 1.0 {
            return bad(format!("diagonal entry {i} is {}, expected 1", row[i]));
        }
        for (j, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("entry ({i}, {j}) = {v} outside [0, 1]"));
            }
            if corr[j][i] != v {
                return bad(format!("not symmetric at ({i}, {j})"));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = corr[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -EPS {
            return bad("not positive semi-definite".into());
        }
        let pivot = d.max(0.0).sqrt();
        l[j][j] = pivot;
        for i in j + 1..n {
            let r = corr[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if pivot > EPS {
                l[i][j] = r / pivot;
            } else if r.abs() > 1e-8 {
                return bad("not positive semi-definite".into());
            }
        }
    }
    Ok(l)
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Orthonormal directions, one per cohort.
fn cohort_directions(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = normal_vec(&mut rng, dim, 1.0);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

struct Prepared {
    cohorts: Vec<CohortLabel>,
    modalities: Vec<Modality>,
    loadings: Vec<Vec<f64>>,
    noise: Vec<f64>,
    offsets: Vec<Vec<f64>>,
}

fn prepare(config: &SynthConfig) -> Result<Prepared, SynthError> {
    let invalid = |m: String| Err(SynthError::Invalid(m));
    if config.subject_count == 0 || config.feature_dim == 0 || config.samples_per_cell == 0 {
        return invalid("subject_count, feature_dim and samples_per_cell must be at least 1".into());
    }
    if config.cohorts.is_empty() || config.modalities.is_empty() {
        return invalid("need at least one cohort and one modality".into());
    }
    let cohorts = config
        .cohorts
        .iter()
        .map(|c| CohortLabel::new(c))
        .collect::<Result<Vec<_>, _>>()?;
    let modalities = config
        .modalities
        .iter()
        .map(|m| Modality::new(m))
        .collect::<Result<Vec<_>, _>>()?;
    if cohorts.iter().collect::<BTreeSet<_>>().len() != cohorts.len() {
        return invalid("duplicate cohort".into());
    }
    if modalities.iter().collect::<BTreeSet<_>>().len() != modalities.len() {
        return invalid("duplicate modality".into());
    }
    if cohorts.len() > config.feature_dim {
        return invalid(format!(
            "{} cohorts need feature_dim >= {}",
            cohorts.len(),
            cohorts.len()
        ));
    }
    for (name, v) in [
        ("subject_separation", config.subject_separation),
        ("cohort_separation", config.cohort_separation),
        ("within_sigma", config.within_sigma),
    ] {
        if !v.is_finite() || v < 0.0 {
            return invalid(format!("{name} must be finite and >= 0, got {v}"));
        }
    }
    let lookup = |map: &BTreeMap<String, f64>, what: &str| -> Result<Vec<Option<f64>>, SynthError> {
        let mut known = BTreeMap::new();
        for (k, &v) in map {
            let label = CohortLabel::new(k)?;
            if !cohorts.contains(&label) {
                return Err(SynthError::Invalid(format!("{what} names unknown cohort `{k}`")));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::Invalid(format!("{what}[{k}] must be finite and >= 0")));
            }
            known.insert(label, v);
        }
        Ok(cohorts.iter().map(|c| known.get(c).copied()).collect())
    };
    let noise = lookup(&config.cohort_noise, "cohort_noise")?
        .into_iter()
        .map(|v| v.unwrap_or(0.0))
        .collect();
    let default_offset = config.cohort_separation / std::f64::consts::SQRT_2;
    let offset_len: Vec<f64> = lookup(&config.cohort_offset, "cohort_offset")?
        .into_iter()
        .map(|v| v.unwrap_or(default_offset))
        .collect();

    let corr = if config.modality_correlation.is_empty() {
        (0..modalities.len())
            .map(|i| (0..modalities.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    } else if config.modality_correlation.len() != modalities.len() {
        return Err(SynthError::Correlation(format!(
            "{} rows for {} modalities",
            config.modality_correlation.len(),
            modalities.len()
        )));
    } else {
        config.modality_correlation.clone()
    };
    let loadings = correlation_loadings(&corr)?;

    let offsets = cohort_directions(cohorts.len(), config.feature_dim, config.seed)
        .into_iter()
        .zip(&offset_len)
        .map(|(dir, &len)| dir.into_iter().map(|x| x * len).collect())
        .collect();
    Ok(Prepared {
        cohorts,
        modalities,
        loadings,
        noise,
        offsets,
    })
}

pub fn generate(config: &SynthConfig) -> Result<DatasetManifest, SynthError> {
    let p = prepare(config)?;
    let dim = config.feature_dim;
    let tau = config.subject_separation / (2.0 * dim as f64).sqrt();
    let width = config.subject_count.to_string().len().max(3);
    let mut records = Vec::with_capacity(config.expected_len());

    for subject in 0..config.subject_count {
        let mut rng = stream(config.seed, subject as u64 + 1);
        let subject_id = format!("subject{:0width$}", subject + 1);
        let latent: Vec<Vec<f64>> = (0..p.modalities.len())
            .map(|_| normal_vec(&mut rng, dim, tau))
            .collect();
        for (m, modality) in p.modalities.iter().enumerate() {
            let mut center = vec![0.0; dim];
            for (k, z) in latent.iter().enumerate() {
                let w = p.loadings[m][k];
                for (c, v) in center.iter_mut().zip(z) {
                    *c += w * v;
                }
            }
            for (c, cohort) in p.cohorts.iter().enumerate() {
                let sigma = config.within_sigma * (1.0 + p.noise[c]);
                for rep in 0..config.samples_per_cell {
                    let noise = normal_vec(&mut rng, dim, sigma);
                    let features = center
                        .iter()
                        .zip(&p.offsets[c])
                        .zip(&noise)
                        .map(|((x, o), n)| x + o + n)
                        .collect();
                    records.push(SampleRecord {
                        sample_id: format!("{subject_id}_{modality}_{cohort}_{rep}"),
                        subject_id: subject_id.clone(),
                        modality: modality.clone(),
                        cohort: cohort.clone(),
                        features,
                    });
                }
            }
        }
    }
    Ok(validate_manifest(records, ValidationOptions::default())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            subject_count: 6,
            cohorts: vec!["a".into(), "b".into()],
            modalities: vec!["RGB".into(), "NIR".into()],
            feature_dim: 4,
            subject_separation: 5.0,
            modality_correlation: vec![],
            cohort_noise: BTreeMap::new(),
            cohort_separation: 1.0,
            cohort_offset: BTreeMap::new(),
            within_sigma: 1.0,
            samples_per_cell: 1,
            seed,
        }
    }

    #[test]
    fn loadings_reproduce_matrix() {
        let c = vec![
            vec![1.0, 0.9, 0.0, 0.2],
            vec![0.9, 1.0, 0.0, 0.1],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.2, 0.1, 0.0, 1.0],
        ];
        let l = correlation_loadings(&c).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - c[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loadings_handle_perfect_correlation() {
        let l = correlation_loadings(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(l, vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn loadings_reject_invalid() {
        assert!(correlation_loadings(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(correlation_loadings(&[vec![0.9, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(correlation_loadings(&[vec![1.0, 1.5], vec![1.5, 1.0]]).is_err());
        // pairwise-valid but jointly indefinite
        let c = vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]];
        assert!(correlation_loadings(&c).is_err());
    }

    #[test]
    fn perfect_correlation_without_noise_gives_identical_modalities() {
        let mut cfg = small(3);
        cfg.modality_correlation = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        cfg.within_sigma = 0.0;
        let m = generate(&cfg).unwrap();
        for s in m.samples().iter().filter(|s| s.modality == Modality::rgb()) {
            let twin = m
                .samples()
                .iter()
                .find(|o| o.modality == Modality::nir() && o.subject_id == s.subject_id && o.cohort == s.cohort)
                .unwrap();
            assert_eq!(s.features, twin.features);
        }
    }

    #[test]
    fn four_sensor_counts() {
        let cfg = SynthConfig::four_sensor(1);
        let m = generate(&cfg).unwrap();
        assert_eq!(m.len(), 2260);
        assert_eq!(m.subject_count(), 113);
        assert_eq!(m.cohorts().len(), 5);
        assert_eq!(m.modalities().len(), 4);
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate(&small(9)).unwrap(), generate(&small(9)).unwrap());
        assert_ne!(generate(&small(9)).unwrap(), generate(&small(10)).unwrap());
    }

    #[test]
    fn cohort_offsets_are_orthogonal_with_requested_length() {
        let dirs = cohort_directions(5, 8, 42);
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_errors() {
        let mut cfg = small(1);
        cfg.cohort_noise.insert("missing".into(), 1.0);
        assert!(matches!(generate(&cfg), Err(SynthError::Invalid(_))));
        let mut cfg = small(1);
        cfg.modality_correlation = vec![vec![1.0]];
        assert!(matches!(generate(&cfg), Err(SynthError::Correlation(_))));
        let mut cfg = small(1);
        cfg.feature_dim = 1;
        assert!(generate(&cfg).is_err());
    }
}
