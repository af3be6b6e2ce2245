// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use biorel::io::write_manifest_files;
use biorel::report::{EvaluationReport, TrustDirection};
use biorel::synthetic::{generate, SynthConfig};

fn biorel(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biorel"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", text(&out.stderr));
    text(&out.stdout)
}

/// Generates a small dataset and ingests it as `default`.
fn ingested(root: &Path) {
    let mut cfg = SynthConfig::four_sensor(2);
    cfg.subject_count = 12;
    cfg.feature_dim = 8;
    let files = write_manifest_files(&generate(&cfg).unwrap(), &root.join("gen")).unwrap();
    let stdout = ok(biorel(
        &root.join("work"),
        &[
            "ingest",
            "--manifest",
            files.manifest.to_str().unwrap(),
            "--embeddings",
            files.embeddings.to_str().unwrap(),
        ],
    ));
    assert!(
        stdout.contains("ingested 240 samples, 12 subjects, 5 cohorts, 4 modalities, dim 8"),
        "{stdout}"
    );
}

fn read_report(path: &Path) -> EvaluationReport {
    EvaluationReport::from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_from_toml_then_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.toml");
    fs::write(
        &config,
        "subject_count = 4\ncohorts = [\"neutral\", \"smile\"]\nmodalities = [\"RGB\"]\nfeature_dim = 3\n\
         subject_separation = 5.0\nseed = 1\n",
    )
    .unwrap();
    let out = tmp.path().join("gen");
    let work = tmp.path().join("work");
    ok(biorel(
        &work,
        &[
            "generate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let manifest = out.join("manifest.csv");
    let emb = out.join("embeddings.jsonl");
    let stdout = ok(biorel(
        &work,
        &[
            "ingest",
            "--manifest",
            manifest.to_str().unwrap(),
            "--embeddings",
            emb.to_str().unwrap(),
            "--name",
            "tiny",
        ],
    ));
    assert!(stdout.contains("ingested 8 samples, 4 subjects"), "{stdout}");
    assert!(work.join("tiny.dataset.json").is_file());
}

#[test]
fn ingest_inline_features() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.csv");
    fs::write(
        &manifest,
        "sample_id,subject_id,modality,cohort,features\na,s1,rgb,Neutral,1 2\nb,s2,RGB,smile,3;4\n",
    )
    .unwrap();
    let stdout = ok(biorel(
        &tmp.path().join("w"),
        &["ingest", "--manifest", manifest.to_str().unwrap()],
    ));
    assert!(
        stdout.contains("ingested 2 samples, 2 subjects, 2 cohorts, 1 modalities, dim 2"),
        "{stdout}"
    );
}

#[test]
fn wrong_dimension_is_an_invariant_error_naming_the_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.csv");
    fs::write(
        &manifest,
        "sample_id,subject_id,modality,cohort,features\na,s1,RGB,neutral,1 2\nbad,s2,RGB,smile,3 4 5\n",
    )
    .unwrap();
    let out = biorel(
        &tmp.path().join("w"),
        &["ingest", "--manifest", manifest.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out.stderr).contains("`bad`"), "{}", text(&out.stderr));
}

#[test]
fn embeddings_row_of_wrong_width_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let emb = tmp.path().join("e.jsonl");
    fs::write(
        &emb,
        "{\"sample_id\":\"a\",\"features\":[1,2]}\n{\"sample_id\":\"b\",\"features\":[1]}\n",
    )
    .unwrap();
    fs::write(
        tmp.path().join("e.jsonl.meta.json"),
        "{\"schema\":\"biorel.embeddings\",\"version\":1,\"feature_dim\":2,\"count\":2}",
    )
    .unwrap();
    let manifest = tmp.path().join("m.csv");
    fs::write(
        &manifest,
        "sample_id,subject_id,modality,cohort,features\na,s1,RGB,n,-\nb,s2,RGB,n,-\n",
    )
    .unwrap();
    let out = biorel(
        &tmp.path().join("w"),
        &[
            "ingest",
            "--manifest",
            manifest.to_str().unwrap(),
            "--embeddings",
            emb.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    let err = text(&out.stderr);
    assert!(err.contains(":2:") && err.contains("`b`"), "{err}");
}

#[test]
fn malformed_manifest_and_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.csv");
    fs::write(&manifest, "id,who\n1,2\n").unwrap();
    let w = tmp.path().join("w");
    assert_eq!(
        biorel(&w, &["ingest", "--manifest", manifest.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        biorel(&w, &["ingest", "--manifest", "/nonexistent/m.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        biorel(&w, &["identify", "--mode", "emotion-fold"]).status.code(),
        Some(1)
    );
    assert_eq!(biorel(&w, &["identify", "--mode", "sideways"]).status.code(), Some(2));
}

#[test]
fn classify_then_risk_appends_entry() {
    let tmp = tempfile::tempdir().unwrap();
    ingested(tmp.path());
    let work = tmp.path().join("work");
    let out = tmp.path().join("cls");
    let stdout = ok(biorel(
        &work,
        &[
            "classify",
            "-k",
            "3",
            "--modality",
            "RGB",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    assert!(stdout.contains("accuracy") && stdout.contains(" ± "), "{stdout}");
    for f in [
        "report.json",
        "confusion_counts.csv",
        "confusion_percent.csv",
        "folds.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let report_path = out.join("report.json");
    let before = read_report(&report_path);
    assert_eq!(before.risks.len(), 1);

    let stdout = ok(biorel(
        &work,
        &[
            "risk",
            "--report",
            report_path.to_str().unwrap(),
            "--alpha",
            "2",
            "--beta",
            "0.5",
        ],
    ));
    assert!(stdout.starts_with("risk = "), "{stdout}");
    let after = read_report(&report_path);
    assert_eq!(after.risks.len(), 2);
    let c = after.classification.as_ref().unwrap();
    let want = 2.0 * (1.0 - c.sensitivity.mean) + 0.5 * (1.0 - c.specificity.mean);
    assert!((after.risks[1].risk - want).abs() < 1e-12);

    let bad = biorel(
        &work,
        &[
            "risk",
            "--report",
            report_path.to_str().unwrap(),
            "--alpha=-1",
            "--beta",
            "1",
        ],
    );
    assert_eq!(bad.status.code(), Some(5));
}

#[test]
fn risk_needs_classification_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    ingested(tmp.path());
    let work = tmp.path().join("work");
    let out = tmp.path().join("id");
    ok(biorel(
        &work,
        &[
            "identify",
            "--mode",
            "emotion-fold",
            "--modality",
            "rgb",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let matrix = fs::read_to_string(out.join("reliability_matrix.csv")).unwrap();
    assert!(
        matrix.starts_with("test\\validation,neutral,shock,sleepy,smile,sunglasses"),
        "{matrix}"
    );
    assert!(matrix.lines().last().unwrap().starts_with("average,"));
    let report = out.join("report.json");
    let res = biorel(
        &work,
        &[
            "risk",
            "--report",
            report.to_str().unwrap(),
            "--alpha",
            "1",
            "--beta",
            "1",
        ],
    );
    assert_eq!(res.status.code(), Some(5));

    let stdout = ok(biorel(
        &work,
        &[
            "trust",
            "--report",
            report.to_str().unwrap(),
            "--base",
            "smile:neutral",
            "--target",
            "sunglasses:neutral",
        ],
    ));
    assert!(stdout.contains("bias_trust"), "{stdout}");
    assert_eq!(read_report(&report).trust_deltas.len(), 1);
}

#[test]
fn trust_between_cube_conditions() {
    let tmp = tempfile::tempdir().unwrap();
    ingested(tmp.path());
    let work = tmp.path().join("work");
    let out = tmp.path().join("cm");
    ok(biorel(
        &work,
        &[
            "identify",
            "--mode",
            "cross-modality",
            "--ranks",
            "1,5",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    assert!(out.join("reliability_rank1.csv").is_file());
    assert!(out.join("reliability_rank5.csv").is_file());
    let report_path = out.join("report.json");
    let stdout = ok(biorel(
        &work,
        &[
            "trust",
            "--report",
            report_path.to_str().unwrap(),
            "--base",
            "rgb:rgb",
            "--target",
            "RGB:IR@1",
        ],
    ));
    assert!(stdout.contains("loss of trust"), "{stdout}");
    let report = read_report(&report_path);
    let cube = report.cube.as_ref().unwrap();
    let delta = &report.trust_deltas[0];
    assert_eq!(delta.direction, TrustDirection::Loss);
    assert_eq!(
        delta.delta,
        cube.cell("RGB", "IR", 1).unwrap() - cube.cell("RGB", "RGB", 1).unwrap()
    );

    let missing = biorel(
        &work,
        &[
            "trust",
            "--report",
            report_path.to_str().unwrap(),
            "--base",
            "RGB:UV",
            "--target",
            "RGB:IR",
        ],
    );
    assert_eq!(missing.status.code(), Some(5));
    let malformed = biorel(
        &work,
        &[
            "trust",
            "--report",
            report_path.to_str().unwrap(),
            "--base",
            "RGB",
            "--target",
            "RGB:IR",
        ],
    );
    assert_eq!(malformed.status.code(), Some(5));
}
