// SPDX-License-Identifier: Apache-2.0

//! Evaluation reports and the delimited-text renderings of matrices, CMC
//! points and confusion matrices.
//!
//! A report stores primitives (matrix cells, per-fold values, the rates fed
//! into each risk figure) next to every derived value, and [`verify`] checks
//! that the derived values still follow from the primitives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data_model::{CohortLabel, DatasetManifest};
use crate::metrics::{
    aggregate_mean_std, bias_trust, cohort_decomposition, risk_from_rates, CmcPoint, CohortDecomposition,
    ConfusionMatrix, MetricSummary, MetricsError, RiskParams,
};
use crate::protocols::{
    ClassificationOutcome, CrossModalityOutcome, EmotionFoldOutcome, RankedReliabilityCube, ReliabilityMatrix,
};

pub const REPORT_SCHEMA: &str = "biorel.report";
pub const REPORT_VERSION: u32 = 1;

/// Tolerance for recomputing derived report fields.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub subjects: usize,
    pub feature_dim: usize,
}

impl From<&DatasetManifest> for DatasetSummary {
    fn from(m: &DatasetManifest) -> Self {
        DatasetSummary {
            samples: m.len(),
            subjects: m.subject_count(),
            feature_dim: m.feature_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub protocol: String,
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, String>,
    pub dataset: DatasetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub index: usize,
    pub subjects: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSection {
    pub labels: Vec<CohortLabel>,
    pub accuracy: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    /// Recall per label from the pooled matrix, aligned with `labels`.
    pub per_class_recall: Vec<Option<f64>>,
    pub folds: Vec<FoldSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub params: RiskParams,
    pub sensitivity: f64,
    pub specificity: f64,
    pub error_fnmr: f64,
    pub error_fmr: f64,
    pub risk: f64,
}

impl RiskEntry {
    pub fn from_rates(sensitivity: f64, specificity: f64, params: RiskParams) -> Result<Self, MetricsError> {
        let risk = risk_from_rates(sensitivity, specificity, &params)?;
        Ok(RiskEntry {
            params,
            sensitivity,
            specificity,
            error_fnmr: 1.0 - sensitivity,
            error_fmr: 1.0 - specificity,
            risk,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustDirection {
    Gain,
    Loss,
    Unchanged,
}

impl TrustDirection {
    pub fn of(delta: f64) -> Self {
        if delta > 0.0 {
            TrustDirection::Gain
        } else if delta < 0.0 {
            TrustDirection::Loss
        } else {
            TrustDirection::Unchanged
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustDelta {
    pub base: String,
    pub target: String,
    pub base_reliability: f64,
    pub target_reliability: f64,
    pub delta: f64,
    pub direction: TrustDirection,
}

impl TrustDelta {
    pub fn new(
        base: String,
        target: String,
        base_reliability: f64,
        target_reliability: f64,
    ) -> Result<Self, MetricsError> {
        let delta = bias_trust(base_reliability, target_reliability)?;
        Ok(TrustDelta {
            base,
            target,
            base_reliability,
            target_reliability,
            delta,
            direction: TrustDirection::of(delta),
        })
    }
}

/// Which hyperparameters the validation cohort picked for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSelection {
    pub test: String,
    pub validation: String,
    pub selected_params: String,
    pub validation_tpir: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub run: RunMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationSection>,
    #[serde(default)]
    pub risks: Vec<RiskEntry>,
    #[serde(default)]
    pub trust_deltas: Vec<TrustDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability_matrix: Option<ReliabilityMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort_decomposition: Option<CohortDecomposition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cell_selection: Vec<CellSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube: Option<RankedReliabilityCube>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

impl EvaluationReport {
    pub fn new(run: RunMetadata) -> Self {
        EvaluationReport {
            schema: REPORT_SCHEMA.into(),
            schema_version: REPORT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            run,
            classification: None,
            risks: Vec::new(),
            trust_deltas: Vec::new(),
            reliability_matrix: None,
            cohort_decomposition: None,
            cell_selection: Vec::new(),
            cube: None,
            confusion: None,
        }
    }

    pub fn from_emotion_fold(run: RunMetadata, outcome: &EmotionFoldOutcome) -> Result<Self, MetricsError> {
        let mut report = EvaluationReport::new(run);
        report.cohort_decomposition = Some(decompose_columns(&outcome.matrix)?);
        report.reliability_matrix = Some(outcome.matrix.clone());
        report.cell_selection = outcome
            .cells
            .iter()
            .map(|c| CellSelection {
                test: c.test.to_string(),
                validation: c.validation.to_string(),
                selected_params: c.selected_params.clone(),
                validation_tpir: c.validation_tpir,
            })
            .collect();
        Ok(report)
    }

    pub fn from_cross_modality(run: RunMetadata, outcome: &CrossModalityOutcome) -> Self {
        let mut report = EvaluationReport::new(run);
        report.cube = Some(outcome.cube.clone());
        report
    }

    /// Classification report with one risk entry at `risk` costs.
    pub fn from_classification(
        run: RunMetadata,
        outcome: &ClassificationOutcome,
        risk: RiskParams,
    ) -> Result<Self, MetricsError> {
        let mut report = EvaluationReport::new(run);
        report.classification = Some(ClassificationSection {
            labels: outcome.labels.clone(),
            accuracy: outcome.accuracy.clone(),
            sensitivity: outcome.sensitivity.clone(),
            specificity: outcome.specificity.clone(),
            per_class_recall: outcome.per_class_recall.clone(),
            folds: outcome
                .folds
                .iter()
                .map(|f| FoldSummary {
                    index: f.index,
                    subjects: f.test_subjects.len(),
                    accuracy: f.accuracy,
                    sensitivity: f.sensitivity,
                    specificity: f.specificity,
                })
                .collect(),
        });
        report.risks.push(RiskEntry::from_rates(
            outcome.sensitivity.mean,
            outcome.specificity.mean,
            risk,
        )?);
        report.confusion = Some(outcome.pooled.clone());
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Cohort decomposition over a matrix's column averages.
pub fn decompose_columns(matrix: &ReliabilityMatrix) -> Result<CohortDecomposition, MetricsError> {
    let mut per_cohort = BTreeMap::new();
    for (label, avg) in matrix.col_labels.iter().zip(&matrix.averages) {
        if let Some(v) = avg {
            let label = CohortLabel::new(label).map_err(|_| MetricsError::EmptyCohorts)?;
            per_cohort.insert(label, *v);
        }
    }
    cohort_decomposition(&per_cohort)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Recomputes every derived field from the stored primitives; returns the
/// list of mismatches.
pub fn verify(report: &EvaluationReport, tol: f64) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();

    if let Some(m) = &report.reliability_matrix {
        if !m.averages_consistent(tol) {
            problems.push("reliability matrix averages differ from its cells".to_string());
        }
        if let Some(d) = &report.cohort_decomposition {
            match decompose_columns(m) {
                Ok(fresh) => {
                    if !close(fresh.overall, d.overall, tol)
                        || fresh.bias_for.cohort != d.bias_for.cohort
                        || fresh.bias_against.cohort != d.bias_against.cohort
                    {
                        problems.push("cohort decomposition differs from matrix averages".into());
                    }
                }
                Err(e) => problems.push(format!("cohort decomposition: {e}")),
            }
        }
    }

    if let Some(c) = &report.classification {
        for (name, summary, folds) in [
            (
                "accuracy",
                &c.accuracy,
                c.folds.iter().map(|f| f.accuracy).collect::<Vec<_>>(),
            ),
            (
                "sensitivity",
                &c.sensitivity,
                c.folds.iter().map(|f| f.sensitivity).collect(),
            ),
            (
                "specificity",
                &c.specificity,
                c.folds.iter().map(|f| f.specificity).collect(),
            ),
        ] {
            match aggregate_mean_std(&summary.fold_values) {
                Ok(fresh) => {
                    if !close(fresh.mean, summary.mean, tol) || !close(fresh.std, summary.std, tol) {
                        problems.push(format!("{name} mean/std differ from fold values"));
                    }
                }
                Err(e) => problems.push(format!("{name}: {e}")),
            }
            if folds != summary.fold_values {
                problems.push(format!("{name} fold values differ from per-fold summaries"));
            }
        }
        if let Some(cm) = &report.confusion {
            let fresh = crate::metrics::per_label_recall(cm);
            let same = fresh.len() == c.per_class_recall.len()
                && fresh.iter().zip(&c.per_class_recall).all(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => close(*a, *b, tol),
                    (None, None) => true,
                    _ => false,
                });
            if !same {
                problems.push("per-class recall differs from pooled confusion matrix".into());
            }
        }
    }

    for (i, r) in report.risks.iter().enumerate() {
        match risk_from_rates(r.sensitivity, r.specificity, &r.params) {
            Ok(fresh) => {
                if !close(fresh, r.risk, tol)
                    || !close(r.error_fnmr, 1.0 - r.sensitivity, tol)
                    || !close(r.error_fmr, 1.0 - r.specificity, tol)
                {
                    problems.push(format!("risk entry {i} does not follow from its rates"));
                }
            }
            Err(e) => problems.push(format!("risk entry {i}: {e}")),
        }
    }

    for (i, t) in report.trust_deltas.iter().enumerate() {
        if !close(t.target_reliability - t.base_reliability, t.delta, tol) || TrustDirection::of(t.delta) != t.direction
        {
            problems.push(format!("trust delta {i} does not follow from its reliabilities"));
        }
    }

    if let Some(cube) = &report.cube {
        if !cube.is_rank_monotone() {
            problems.push("cube is not monotone in rank".into());
        }
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

fn csv_text(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 labels")
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Matrix as CSV at four decimals, `-` for excluded cells, with an
/// `average` row when `with_average`.
pub fn render_reliability_matrix(matrix: &ReliabilityMatrix, corner: &str, with_average: bool) -> String {
    let mut rows = Vec::with_capacity(matrix.row_labels.len() + 2);
    rows.push(
        std::iter::once(corner.to_string())
            .chain(matrix.col_labels.iter().cloned())
            .collect(),
    );
    for (label, cells) in matrix.row_labels.iter().zip(&matrix.cells) {
        rows.push(
            std::iter::once(label.clone())
                .chain(cells.iter().map(|c| c.map_or_else(|| "-".to_string(), fmt4)))
                .collect(),
        );
    }
    if with_average {
        rows.push(
            std::iter::once("average".to_string())
                .chain(matrix.averages.iter().map(|c| c.map_or_else(|| "-".to_string(), fmt4)))
                .collect(),
        );
    }
    csv_text(rows)
}

/// One labelled CMC curve.
pub struct CmcSeries<'a> {
    pub row: &'a str,
    pub column: &'a str,
    pub points: &'a [CmcPoint],
}

/// Long-format CMC points: `<row_name>,<column_name>,rank,tpir`.
pub fn render_cmc(row_name: &str, column_name: &str, series: &[CmcSeries<'_>]) -> String {
    let mut rows = vec![vec![
        row_name.to_string(),
        column_name.to_string(),
        "rank".into(),
        "tpir".into(),
    ]];
    for s in series {
        for p in s.points {
            rows.push(vec![
                s.row.to_string(),
                s.column.to_string(),
                p.rank.to_string(),
                fmt4(p.tpir),
            ]);
        }
    }
    csv_text(rows)
}

fn confusion_rows(cm: &ConfusionMatrix, cell: impl Fn(usize, usize) -> String) -> String {
    let mut rows = vec![std::iter::once("truth\\predicted".to_string())
        .chain(cm.labels().iter().map(|l| l.to_string()))
        .collect::<Vec<_>>()];
    for (i, label) in cm.labels().iter().enumerate() {
        rows.push(
            std::iter::once(label.to_string())
                .chain((0..cm.labels().len()).map(|j| cell(i, j)))
                .collect(),
        );
    }
    csv_text(rows)
}

pub fn render_confusion_counts(cm: &ConfusionMatrix) -> String {
    confusion_rows(cm, |i, j| cm.counts()[i][j].to_string())
}

/// Row-normalised percentages at one decimal place.
pub fn render_confusion_percent(cm: &ConfusionMatrix) -> String {
    let norm = cm.row_normalized();
    confusion_rows(cm, |i, j| format!("{:.1}", 100.0 * norm[i][j]))
}

pub fn render_folds(section: &ClassificationSection) -> String {
    let mut rows = vec![["fold", "subjects", "accuracy", "sensitivity", "specificity"]
        .map(String::from)
        .to_vec()];
    for f in &section.folds {
        rows.push(vec![
            f.index.to_string(),
            f.subjects.to_string(),
            fmt4(f.accuracy),
            fmt4(f.sensitivity),
            fmt4(f.specificity),
        ]);
    }
    csv_text(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix() -> ReliabilityMatrix {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        ReliabilityMatrix::new(
            labels.clone(),
            labels,
            vec![
                vec![None, Some(1.0), Some(0.5)],
                vec![Some(0.25), None, Some(1.0)],
                vec![Some(0.75), Some(0.123456), None],
            ],
            true,
        )
        .unwrap()
    }

    fn run() -> RunMetadata {
        RunMetadata {
            protocol: "test".into(),
            seed: Some(1),
            parameters: BTreeMap::new(),
            dataset: DatasetSummary {
                samples: 1,
                subjects: 1,
                feature_dim: 1,
            },
        }
    }

    #[test]
    fn matrix_rendering() {
        let text = render_reliability_matrix(&matrix(), "test\\validation", true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "test\\validation,a,b,c");
        assert_eq!(lines[1], "a,-,1.0000,0.5000");
        assert_eq!(lines[3], "c,0.7500,0.1235,-");
        assert_eq!(lines[4], "average,0.5000,0.5617,0.7500");
    }

    #[test]
    fn confusion_rendering() {
        let labels = vec![CohortLabel::new("a").unwrap(), CohortLabel::new("b").unwrap()];
        let cm = ConfusionMatrix::from_counts(labels, vec![vec![2, 1], vec![0, 3]]).unwrap();
        assert_eq!(render_confusion_counts(&cm), "truth\\predicted,a,b\na,2,1\nb,0,3\n");
        assert_eq!(
            render_confusion_percent(&cm),
            "truth\\predicted,a,b\na,66.7,33.3\nb,0.0,100.0\n"
        );
    }

    #[test]
    fn verify_catches_tampering() {
        let mut report = EvaluationReport::new(run());
        report.reliability_matrix = Some(matrix());
        report.cohort_decomposition = Some(decompose_columns(&matrix()).unwrap());
        report
            .risks
            .push(RiskEntry::from_rates(0.9679, 0.9918, RiskParams::balanced()).unwrap());
        report
            .trust_deltas
            .push(TrustDelta::new("x".into(), "y".into(), 1.0, 0.9358).unwrap());
        assert_eq!(verify(&report, CONSISTENCY_TOL), Ok(()));

        let mut bad = report.clone();
        bad.risks[0].risk += 1e-6;
        assert!(verify(&bad, CONSISTENCY_TOL).is_err());
        let mut bad = report.clone();
        bad.trust_deltas[0].direction = TrustDirection::Gain;
        assert!(verify(&bad, CONSISTENCY_TOL).is_err());
        let mut bad = report;
        bad.reliability_matrix.as_mut().unwrap().averages[0] = Some(0.9);
        assert!(verify(&bad, CONSISTENCY_TOL).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut report = EvaluationReport::new(run());
        report.reliability_matrix = Some(matrix());
        report
            .risks
            .push(RiskEntry::from_rates(0.1 + 0.2, 1.0 / 3.0, RiskParams::new(0.7, 2.5).unwrap()).unwrap());
        let back = EvaluationReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
