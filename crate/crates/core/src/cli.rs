// SPDX-License-Identifier: Apache-2.0

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 parse error,
//! 4 data invariant violation, 5 protocol precondition failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::baseline::{CentroidClassifier, DistanceMetric};
use crate::data_model::{CohortLabel, DataError, DatasetManifest, Modality, ValidationOptions};
use crate::io::{self, FormatError};
use crate::metrics::{MetricsError, RiskParams};
use crate::protocols::{
    cross_modality_identification, emotion_fold_identification, subject_fold_classification, Execution, ProtocolError,
};
use crate::report::{
    render_cmc, render_confusion_counts, render_confusion_percent, render_folds, render_reliability_matrix, verify,
    CmcSeries, DatasetSummary, EvaluationReport, RiskEntry, RunMetadata, TrustDelta, CONSISTENCY_TOL,
};
use crate::synthetic::{generate, SynthConfig, SynthError};

/// Stdout writes that tolerate a closed pipe (e.g. `biorel ... | head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Parse,
    Invariant,
    Precondition,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Extra lines, e.g. one per rejected record.
    pub details: Vec<String>,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Io => 1,
            ErrorKind::Parse => 3,
            ErrorKind::Invariant => 4,
            ErrorKind::Precondition => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let details = match &e {
            DataError::Rejected(issues) => issues.iter().map(|i| format!("rejected: {i}")).collect(),
            _ => Vec::new(),
        };
        CliError {
            kind: ErrorKind::Invariant,
            message: e.to_string(),
            details,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Data(d) => d.into(),
            FormatError::Io { .. } => CliError::new(ErrorKind::Io, e.to_string()),
            FormatError::Parse { .. } | FormatError::MissingSidecar { .. } => {
                CliError::new(ErrorKind::Parse, e.to_string())
            }
            FormatError::Dimension { .. } | FormatError::MissingEmbedding { .. } => {
                CliError::new(ErrorKind::Invariant, e.to_string())
            }
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Data(d) => d.into(),
            other => CliError::new(ErrorKind::Precondition, other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::new(ErrorKind::Precondition, e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::new(ErrorKind::Invariant, e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "biorel",
    version,
    about = "Reliability, risk and trust-change evaluation for biometric systems"
)]
pub struct Cli {
    /// Working directory for ingested datasets and default outputs.
    #[arg(long, global = true, env = "BIOREL_WORKDIR", default_value = ".biorel")]
    pub workdir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IdentifyMode {
    EmotionFold,
    CrossModality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for DistanceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => DistanceMetric::Cosine,
            MetricArg::Euclidean => DistanceMetric::Euclidean,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (manifest + embeddings) from a TOML or JSON config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a manifest and its embeddings and store the dataset in the working directory.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        name: String,
        /// Maximum samples per (subject, modality, cohort).
        #[arg(long)]
        max_per_combination: Option<usize>,
    },
    /// Run an identification protocol.
    Identify {
        /// Dataset name in the working directory, or a path to a stored dataset.
        #[arg(long, default_value = "default")]
        dataset: String,
        #[arg(long, value_enum)]
        mode: IdentifyMode,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        ranks: Vec<usize>,
        /// Restrict to one modality before running.
        #[arg(long)]
        modality: Option<String>,
        /// Fix the distance metric instead of selecting it on the validation cohort.
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Single-worker execution; results are identical either way.
        #[arg(long)]
        deterministic: bool,
    },
    /// Subject-fold cohort classification.
    Classify {
        #[arg(long, default_value = "default")]
        dataset: String,
        /// Labels to classify; defaults to every cohort in the dataset.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        modality: Option<String>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        deterministic: bool,
    },
    /// Risk of error from a report's sensitivity and specificity; appended to the report.
    Risk {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
    },
    /// Trust change between two conditions of a report (`ROW:COLUMN[@RANK]`); appended to the report.
    Trust {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        base: String,
        #[arg(long)]
        target: String,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let workdir = cli.workdir;
    match cli.command {
        Command::Generate { config, out } => cmd_generate(&config, &out),
        Command::Ingest {
            manifest,
            embeddings,
            name,
            max_per_combination,
        } => cmd_ingest(&workdir, &manifest, embeddings.as_deref(), &name, max_per_combination).map(|_| ()),
        Command::Identify {
            dataset,
            mode,
            ranks,
            modality,
            metric,
            seed,
            out,
            deterministic,
        } => {
            let out = out.unwrap_or_else(|| workdir.join("out").join("identify"));
            let opts = IdentifyOptions {
                mode,
                ranks,
                modality,
                metric: metric.map(Into::into),
                seed,
                execution: execution(deterministic),
            };
            cmd_identify(&resolve_dataset(&workdir, &dataset)?, &opts, &out).map(|_| ())
        }
        Command::Classify {
            dataset,
            labels,
            k,
            seed,
            modality,
            metric,
            alpha,
            beta,
            out,
            deterministic,
        } => {
            let out = out.unwrap_or_else(|| workdir.join("out").join("classify"));
            let opts = ClassifyOptions {
                labels,
                k,
                seed,
                modality,
                metric: metric.map(Into::into),
                risk: RiskParams::new(alpha, beta)?,
                execution: execution(deterministic),
            };
            cmd_classify(&resolve_dataset(&workdir, &dataset)?, &opts, &out).map(|_| ())
        }
        Command::Risk { report, alpha, beta } => cmd_risk(&report, alpha, beta).map(|_| ()),
        Command::Trust { report, base, target } => cmd_trust(&report, &base, &target).map(|_| ()),
    }
}

fn execution(deterministic: bool) -> Execution {
    if deterministic {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", path.display())))
}

pub fn dataset_path(workdir: &Path, name: &str) -> PathBuf {
    workdir.join(format!("{name}.dataset.json"))
}

/// A dataset argument is either a stored dataset file or a name in the working directory.
pub fn resolve_dataset(workdir: &Path, dataset: &str) -> Result<DatasetManifest, CliError> {
    let direct = Path::new(dataset);
    let path = if direct.is_file() {
        direct.to_path_buf()
    } else {
        dataset_path(workdir, dataset)
    };
    if !path.is_file() {
        return Err(CliError::new(
            ErrorKind::Io,
            format!(
                "dataset `{dataset}` not found (looked for {}); run `biorel ingest` first",
                path.display()
            ),
        ));
    }
    Ok(io::load_dataset(&path)?)
}

fn load_config(path: &Path) -> Result<SynthConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::new(ErrorKind::Parse, format!("{}: {e}", path.display())))
}

pub fn cmd_generate(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let manifest = generate(&cfg)?;
    let files = io::write_manifest_files(&manifest, out)?;
    say!(
        "generated {} samples, {} subjects, dim {} -> {}, {}",
        manifest.len(),
        manifest.subject_count(),
        manifest.feature_dim(),
        files.manifest.display(),
        files.embeddings.display()
    );
    Ok(())
}

pub fn cmd_ingest(
    workdir: &Path,
    manifest: &Path,
    embeddings: Option<&Path>,
    name: &str,
    max_per_combination: Option<usize>,
) -> Result<PathBuf, CliError> {
    let dataset = io::read_manifest(manifest, embeddings, ValidationOptions { max_per_combination })?;
    let path = dataset_path(workdir, name);
    io::save_dataset(&dataset, &path)?;
    say!(
        "ingested {} samples, {} subjects, {} cohorts, {} modalities, dim {} -> {}",
        dataset.len(),
        dataset.subject_count(),
        dataset.cohorts().len(),
        dataset.modalities().len(),
        dataset.feature_dim(),
        path.display()
    );
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct IdentifyOptions {
    pub mode: IdentifyMode,
    pub ranks: Vec<usize>,
    pub modality: Option<String>,
    pub metric: Option<DistanceMetric>,
    pub seed: Option<u64>,
    pub execution: Execution,
}

fn restrict_modality(dataset: &DatasetManifest, modality: Option<&str>) -> Result<DatasetManifest, CliError> {
    match modality {
        None => Ok(dataset.clone()),
        Some(m) => {
            let m = Modality::new(m)?;
            dataset
                .filtered(|s| s.modality == m)
                .ok_or_else(|| CliError::new(ErrorKind::Precondition, format!("no samples with modality `{m}`")))
        }
    }
}

fn classifier_for(metric: Option<DistanceMetric>) -> CentroidClassifier {
    metric.map_or_else(CentroidClassifier::default, CentroidClassifier::with_metric)
}

/// Runs an identification protocol and writes the report, matrices and CMC
/// points into `out`. Returns the report path.
pub fn cmd_identify(dataset: &DatasetManifest, opts: &IdentifyOptions, out: &Path) -> Result<PathBuf, CliError> {
    let data = restrict_modality(dataset, opts.modality.as_deref())?;
    let classifier = classifier_for(opts.metric);
    let mut parameters = BTreeMap::new();
    if let Some(m) = &opts.modality {
        parameters.insert("modality".to_string(), Modality::new(m)?.to_string());
    }
    parameters.insert(
        "metric".to_string(),
        opts.metric
            .map_or_else(|| "validation-selected".to_string(), |m| m.to_string()),
    );
    let report_path = out.join("report.json");

    match opts.mode {
        IdentifyMode::EmotionFold => {
            let outcome = emotion_fold_identification(&data, &classifier, opts.execution)?;
            let run = RunMetadata {
                protocol: "emotion-fold".into(),
                seed: opts.seed,
                parameters,
                dataset: DatasetSummary::from(&data),
            };
            let report = EvaluationReport::from_emotion_fold(run, &outcome)?;
            let series: Vec<CmcSeries> = outcome
                .cells
                .iter()
                .map(|c| CmcSeries {
                    row: c.test.as_str(),
                    column: c.validation.as_str(),
                    points: &c.cmc,
                })
                .collect();
            write_file(&report_path, &report.to_json())?;
            write_file(
                &out.join("reliability_matrix.csv"),
                &render_reliability_matrix(&outcome.matrix, "test\\validation", true),
            )?;
            write_file(&out.join("cmc.csv"), &render_cmc("test", "validation", &series))?;
            emit!(
                "{}",
                render_reliability_matrix(&outcome.matrix, "test\\validation", true)
            );
            if let Some(d) = &report.cohort_decomposition {
                say!(
                    "overall {:.4}; bias for `{}` ({:.4}), bias against `{}` ({:.4})",
                    d.overall,
                    d.bias_for.cohort,
                    d.bias_for.value,
                    d.bias_against.cohort,
                    d.bias_against.value
                );
            }
        }
        IdentifyMode::CrossModality => {
            parameters.insert(
                "ranks".to_string(),
                opts.ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
            );
            let outcome = cross_modality_identification(&data, &classifier, &opts.ranks, opts.execution)?;
            let run = RunMetadata {
                protocol: "cross-modality".into(),
                seed: opts.seed,
                parameters,
                dataset: DatasetSummary::from(&data),
            };
            let report = EvaluationReport::from_cross_modality(run, &outcome);
            write_file(&report_path, &report.to_json())?;
            for &rank in &outcome.cube.ranks {
                let panel = outcome.cube.panel_matrix(rank).expect("rank present");
                let text = render_reliability_matrix(&panel, "train\\test", false);
                write_file(&out.join(format!("reliability_rank{rank}.csv")), &text)?;
                say!("rank-{rank}");
                emit!("{text}");
            }
            let series: Vec<CmcSeries> = outcome
                .cells
                .iter()
                .map(|c| CmcSeries {
                    row: c.train.as_str(),
                    column: c.test.as_str(),
                    points: &c.cmc,
                })
                .collect();
            write_file(&out.join("cmc.csv"), &render_cmc("train", "test", &series))?;
        }
    }
    say!("report -> {}", report_path.display());
    Ok(report_path)
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub labels: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub modality: Option<String>,
    pub metric: Option<DistanceMetric>,
    pub risk: RiskParams,
    pub execution: Execution,
}

pub fn cmd_classify(dataset: &DatasetManifest, opts: &ClassifyOptions, out: &Path) -> Result<PathBuf, CliError> {
    let data = restrict_modality(dataset, opts.modality.as_deref())?;
    let labels: Vec<CohortLabel> = if opts.labels.is_empty() {
        data.cohorts().into_iter().collect()
    } else {
        opts.labels
            .iter()
            .map(|l| CohortLabel::new(l))
            .collect::<Result<_, _>>()?
    };
    let classifier = classifier_for(opts.metric);
    let outcome = subject_fold_classification(&data, &classifier, opts.k, opts.seed, &labels, opts.execution)?;

    let mut parameters = BTreeMap::new();
    parameters.insert("k".to_string(), opts.k.to_string());
    parameters.insert(
        "labels".to_string(),
        outcome
            .labels
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    parameters.insert(
        "metric".to_string(),
        opts.metric.unwrap_or(DistanceMetric::Cosine).to_string(),
    );
    if let Some(m) = &opts.modality {
        parameters.insert("modality".to_string(), Modality::new(m)?.to_string());
    }
    let run = RunMetadata {
        protocol: "subject-fold-classification".into(),
        seed: Some(opts.seed),
        parameters,
        dataset: DatasetSummary::from(&data),
    };
    let report = EvaluationReport::from_classification(run, &outcome, opts.risk)?;
    let report_path = out.join("report.json");
    write_file(&report_path, &report.to_json())?;
    write_file(
        &out.join("confusion_counts.csv"),
        &render_confusion_counts(&outcome.pooled),
    )?;
    write_file(
        &out.join("confusion_percent.csv"),
        &render_confusion_percent(&outcome.pooled),
    )?;
    let section = report.classification.as_ref().expect("classification section");
    write_file(&out.join("folds.csv"), &render_folds(section))?;

    say!("accuracy    {}", outcome.accuracy.display_pm());
    say!("sensitivity {}", outcome.sensitivity.display_pm());
    say!("specificity {}", outcome.specificity.display_pm());
    let risk = &report.risks[0];
    say!(
        "risk {:.4} (alpha={}, beta={})",
        risk.risk,
        risk.params.alpha,
        risk.params.beta
    );
    emit!("{}", render_confusion_percent(&outcome.pooled));
    say!("report -> {}", report_path.display());
    Ok(report_path)
}

fn read_report(path: &Path) -> Result<EvaluationReport, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", path.display())))?;
    EvaluationReport::from_json(&text)
        .map_err(|e| CliError::new(ErrorKind::Parse, format!("{}:{}: {e}", path.display(), e.line())))
}

fn write_report(path: &Path, report: &EvaluationReport) -> Result<(), CliError> {
    if let Err(problems) = verify(report, CONSISTENCY_TOL) {
        return Err(CliError {
            kind: ErrorKind::Invariant,
            message: "report is not self-consistent".into(),
            details: problems,
        });
    }
    write_file(path, &report.to_json())
}

pub fn cmd_risk(report_path: &Path, alpha: f64, beta: f64) -> Result<RiskEntry, CliError> {
    let params = RiskParams::new(alpha, beta)?;
    let mut report = read_report(report_path)?;
    let section = report.classification.as_ref().ok_or_else(|| {
        CliError::new(
            ErrorKind::Precondition,
            format!("{} has no sensitivity/specificity metrics", report_path.display()),
        )
    })?;
    let entry = RiskEntry::from_rates(section.sensitivity.mean, section.specificity.mean, params)?;
    say!(
        "risk = {:.4} (alpha={alpha}, beta={beta}, error_fnmr={:.4}, error_fmr={:.4})",
        entry.risk,
        entry.error_fnmr,
        entry.error_fmr
    );
    report.risks.push(entry.clone());
    write_report(report_path, &report)?;
    Ok(entry)
}

/// A condition reference `ROW:COLUMN[@RANK]`, rank defaulting to 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionRef {
    pub row: String,
    pub column: String,
    pub rank: usize,
}

impl std::str::FromStr for ConditionRef {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (cells, rank) = match s.rsplit_once('@') {
            Some((c, r)) => (c, r.trim().parse::<usize>().map_err(|_| format!("bad rank in `{s}`"))?),
            None => (s, 1),
        };
        let (row, column) = cells
            .split_once(':')
            .ok_or_else(|| format!("condition `{s}` must look like ROW:COLUMN[@RANK]"))?;
        if row.trim().is_empty() || column.trim().is_empty() || rank == 0 {
            return Err(format!("condition `{s}` must look like ROW:COLUMN[@RANK]"));
        }
        Ok(ConditionRef {
            row: row.trim().to_string(),
            column: column.trim().to_string(),
            rank,
        })
    }
}

fn find_label<'a>(labels: &'a [String], wanted: &str) -> Option<&'a str> {
    labels
        .iter()
        .find(|l| l.eq_ignore_ascii_case(wanted))
        .map(String::as_str)
}

fn lookup_condition(report: &EvaluationReport, cond: &ConditionRef) -> Result<(String, f64), CliError> {
    let unknown = || {
        CliError::new(
            ErrorKind::Precondition,
            format!("unknown condition `{}:{}@{}`", cond.row, cond.column, cond.rank),
        )
    };
    if let Some(cube) = &report.cube {
        let row = find_label(&cube.train_labels, &cond.row).ok_or_else(unknown)?;
        let col = find_label(&cube.test_labels, &cond.column).ok_or_else(unknown)?;
        let v = cube.cell(row, col, cond.rank).ok_or_else(unknown)?;
        return Ok((format!("{row}:{col}@{}", cond.rank), v));
    }
    if let Some(m) = &report.reliability_matrix {
        if cond.rank != 1 {
            return Err(unknown());
        }
        let row = find_label(&m.row_labels, &cond.row).ok_or_else(unknown)?;
        let col = find_label(&m.col_labels, &cond.column).ok_or_else(unknown)?;
        let v = m.cell(row, col).ok_or_else(unknown)?;
        return Ok((format!("{row}:{col}@1"), v));
    }
    Err(CliError::new(
        ErrorKind::Precondition,
        "report has no reliability matrix or cube",
    ))
}

pub fn cmd_trust(report_path: &Path, base: &str, target: &str) -> Result<TrustDelta, CliError> {
    let parse = |s: &str| {
        s.parse::<ConditionRef>()
            .map_err(|e| CliError::new(ErrorKind::Precondition, e))
    };
    let (base, target) = (parse(base)?, parse(target)?);
    let mut report = read_report(report_path)?;
    let (base_name, base_value) = lookup_condition(&report, &base)?;
    let (target_name, target_value) = lookup_condition(&report, &target)?;
    let delta = TrustDelta::new(base_name, target_name, base_value, target_value)?;
    let annotation = match delta.direction {
        crate::report::TrustDirection::Gain => "gain of trust",
        crate::report::TrustDirection::Loss => "loss of trust",
        crate::report::TrustDirection::Unchanged => "no change",
    };
    say!(
        "bias_trust {} -> {} = {:+.4} ({annotation}; {:.4} -> {:.4})",
        delta.base,
        delta.target,
        delta.delta,
        base_value,
        target_value
    );
    report.trust_deltas.push(delta.clone());
    write_report(report_path, &report)?;
    Ok(delta)
}
