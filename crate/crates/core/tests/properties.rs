// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use proptest::prelude::*;

use biorel::data_model::{
    partition_by_cohort, partition_by_subject_folds, validate_manifest, CohortLabel, DataError, Modality, SampleRecord,
    ValidationOptions,
};
use biorel::io::{load_dataset, read_manifest, save_dataset, write_manifest_files};
use biorel::metrics::{aggregate_mean_std, cohort_decomposition, rank1_prediction, ClassificationTrial};
use biorel::synthetic::{generate, SynthConfig};

fn records() -> impl Strategy<Value = Vec<SampleRecord>> {
    prop::collection::vec(
        (0usize..12, 0usize..3, 0usize..2, prop::collection::vec(-5.0..5.0f64, 3)),
        2..60,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (subject, cohort, modality, features))| SampleRecord {
                sample_id: format!("x{i:03}"),
                subject_id: format!("s{subject:02}"),
                modality: if modality == 0 {
                    Modality::rgb()
                } else {
                    Modality::nir()
                },
                cohort: CohortLabel::new(["neutral", "smile", "shock"][cohort]).unwrap(),
                features,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn validation_sorts_and_keeps_every_record(mut recs in records(), seed in any::<u64>()) {
        let n = recs.len();
        use rand::{seq::SliceRandom, SeedableRng};
        recs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let m = validate_manifest(recs, ValidationOptions::default()).unwrap();
        prop_assert_eq!(m.len(), n);
        prop_assert!(m.samples().windows(2).all(|w| w[0].sample_id < w[1].sample_id));
    }

    #[test]
    fn cohort_partition_covers_manifest(recs in records()) {
        let m = validate_manifest(recs, ValidationOptions::default()).unwrap();
        let parts = partition_by_cohort(&m);
        prop_assert_eq!(parts.values().map(Vec::len).sum::<usize>(), m.len());
        for (label, samples) in &parts {
            prop_assert!(samples.iter().all(|s| &s.cohort == label));
        }
    }

    #[test]
    fn subject_folds_partition_subjects(recs in records(), k in 2usize..6, seed in any::<u64>()) {
        let m = validate_manifest(recs, ValidationOptions::default()).unwrap();
        match partition_by_subject_folds(&m, k, seed) {
            Err(DataError::TooManyFolds { .. }) => prop_assert!(k > m.subject_count()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
            Ok(folds) => {
                let mut seen = BTreeSet::new();
                let sizes: Vec<usize> = folds.iter().map(|f| f.subjects.len()).collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
                for f in &folds {
                    for s in &f.subjects {
                        prop_assert!(seen.insert(s.clone()));
                    }
                    prop_assert!(f.samples.iter().all(|x| f.contains_subject(&x.subject_id)));
                }
                prop_assert_eq!(seen.len(), m.subject_count());
                prop_assert_eq!(folds.iter().map(|f| f.samples.len()).sum::<usize>(), m.len());
                let again = partition_by_subject_folds(&m, k, seed).unwrap();
                prop_assert!(folds.iter().zip(&again).all(|(a, b)| a.subjects == b.subjects));
            }
        }
    }

    #[test]
    fn population_std_matches_definition(values in prop::collection::vec(0.0..1.0f64, 1..20)) {
        let s = aggregate_mean_std(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((s.mean - mean).abs() < 1e-12);
        prop_assert!((s.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn decomposition_brackets_the_mean(values in prop::collection::vec(0.0..1.0f64, 1..6)) {
        let per = values
            .iter()
            .enumerate()
            .map(|(i, v)| (CohortLabel::new(&format!("c{i}")).unwrap(), *v))
            .collect();
        let d = cohort_decomposition(&per).unwrap();
        prop_assert!(d.bias_against.value <= d.overall + 1e-12);
        prop_assert!(d.overall <= d.bias_for.value + 1e-12);
    }

    #[test]
    fn rank1_is_a_maximum(scores in prop::collection::vec(-3i8..3, 2..6)) {
        let map = scores
            .iter()
            .enumerate()
            .map(|(i, v)| (CohortLabel::new(&format!("l{i}")).unwrap(), f64::from(*v)))
            .collect::<std::collections::BTreeMap<_, _>>();
        let first = map.keys().next().unwrap().clone();
        let trial = ClassificationTrial::new("x", first, map.clone()).unwrap();
        let best = rank1_prediction(&trial);
        let max = map.values().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(map[best], max);
        prop_assert!(map.iter().take_while(|(l, _)| *l != best).all(|(_, v)| *v < max));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_generation_is_seed_deterministic(seed in any::<u64>(), subjects in 2usize..8) {
        let mut cfg = SynthConfig::four_sensor(seed);
        cfg.subject_count = subjects;
        cfg.feature_dim = 6;
        let a = generate(&cfg).unwrap();
        prop_assert_eq!(a.len(), cfg.expected_len());
        let b = generate(&cfg).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn files_round_trip(seed in any::<u64>()) {
        let mut cfg = SynthConfig::four_sensor(seed);
        cfg.subject_count = 3;
        cfg.feature_dim = 5;
        let m = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_manifest_files(&m, dir.path()).unwrap();
        let back = read_manifest(&files.manifest, Some(&files.embeddings), ValidationOptions::default()).unwrap();
        prop_assert_eq!(back.samples(), m.samples());
        let store = dir.path().join("d.dataset.json");
        save_dataset(&m, &store).unwrap();
        let loaded = load_dataset(&store).unwrap();
        prop_assert_eq!(loaded.samples(), m.samples());
    }
}
