// SPDX-License-Identifier: Apache-2.0

//! On-disk formats.
//!
//! Manifest: UTF-8 CSV with a header row and the columns
//! `sample_id, subject_id, modality, cohort, features`. The last column is
//! either an inline vector (numbers separated by spaces or `;`), empty or `-`
//! to take the vector from the embeddings file given alongside, or a path
//! (relative to the manifest) to another embeddings file.
//!
//! Embeddings: JSON Lines, one `{"sample_id": ..., "features": [...]}` object
//! per line, with a sidecar `<file>.meta.json` declaring `feature_dim`.
//!
//! Dataset store: a validated manifest persisted as one JSON document.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{
    validate_manifest, CohortLabel, DataError, DatasetManifest, Modality, SampleRecord, ValidationOptions,
};

pub const EMBEDDINGS_SCHEMA: &str = "biorel.embeddings";
pub const DATASET_SCHEMA: &str = "biorel.dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: missing sidecar metadata file {sidecar}")]
    MissingSidecar { path: PathBuf, sidecar: PathBuf },
    #[error("{path}:{line}: sample `{sample_id}` has dimension {found}, declared feature_dim is {expected}")]
    Dimension {
        path: PathBuf,
        line: usize,
        sample_id: String,
        expected: usize,
        found: usize,
    },
    #[error("no embedding found for sample `{sample_id}`")]
    MissingEmbedding { sample_id: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> FormatError {
    FormatError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsMeta {
    pub schema: String,
    pub version: u32,
    pub feature_dim: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingRow {
    sample_id: String,
    features: Vec<f64>,
}

pub fn sidecar_path(embeddings: &Path) -> PathBuf {
    let mut name = embeddings.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Reads an embeddings file and checks every row against the declared dimension.
pub fn read_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, FormatError> {
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(FormatError::MissingSidecar {
            path: path.to_path_buf(),
            sidecar,
        });
    }
    let meta_text = fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    let meta: EmbeddingsMeta = serde_json::from_str(&meta_text).map_err(|e| FormatError::Parse {
        path: sidecar.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if meta.schema != EMBEDDINGS_SCHEMA {
        return Err(FormatError::Parse {
            path: sidecar,
            line: 1,
            message: format!("unexpected schema `{}`", meta.schema),
        });
    }

    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(line).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if row.features.len() != meta.feature_dim {
            return Err(FormatError::Dimension {
                path: path.to_path_buf(),
                line: line_no,
                sample_id: row.sample_id,
                expected: meta.feature_dim,
                found: row.features.len(),
            });
        }
        if out.insert(row.sample_id.clone(), row.features).is_some() {
            return Err(FormatError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate sample_id `{}`", row.sample_id),
            });
        }
    }
    Ok(out)
}

fn parse_inline(field: &str) -> Option<Vec<f64>> {
    let values: Result<Vec<f64>, _> = field
        .split(|c: char| c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse::<f64>)
        .collect();
    values.ok().filter(|v| !v.is_empty())
}

/// Raw records from a manifest file, before validation.
pub fn read_manifest_records(manifest: &Path, embeddings: Option<&Path>) -> Result<Vec<SampleRecord>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| io_err(manifest, e))?;
    let headers = reader.headers().map_err(|e| FormatError::Parse {
        path: manifest.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let expected = ["sample_id", "subject_id", "modality", "cohort"];
    if headers.len() != 5 || !headers.iter().zip(expected).all(|(h, e)| h.eq_ignore_ascii_case(e)) {
        return Err(FormatError::Parse {
            path: manifest.to_path_buf(),
            line: 1,
            message: "header must be `sample_id,subject_id,modality,cohort,features`".into(),
        });
    }

    let default_embeddings = embeddings.map(read_embeddings).transpose()?;
    let base_dir = manifest.parent().unwrap_or(Path::new("."));
    let mut referenced: BTreeMap<PathBuf, BTreeMap<String, Vec<f64>>> = BTreeMap::new();

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| FormatError::Parse {
            path: manifest.to_path_buf(),
            line,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let sample_id = row[0].to_string();
        if sample_id.is_empty() || row[1].is_empty() {
            return Err(parse_err("sample_id and subject_id must not be empty".into()));
        }
        let modality = Modality::new(&row[2]).map_err(|e| parse_err(format!("modality: {e}")))?;
        let cohort = CohortLabel::new(&row[3]).map_err(|e| parse_err(format!("cohort: {e}")))?;
        let field = &row[4];
        let features = if field.is_empty() || field == "-" {
            let table = default_embeddings.as_ref().ok_or_else(|| {
                parse_err(format!(
                    "sample `{sample_id}` refers to an embeddings file but none was given"
                ))
            })?;
            table.get(&sample_id).cloned()
        } else if let Some(v) = parse_inline(field) {
            Some(v)
        } else {
            let path = base_dir.join(field);
            if !referenced.contains_key(&path) {
                let table = read_embeddings(&path)?;
                referenced.insert(path.clone(), table);
            }
            referenced[&path].get(&sample_id).cloned()
        };
        let features = features.ok_or_else(|| FormatError::MissingEmbedding {
            sample_id: sample_id.clone(),
        })?;
        records.push(SampleRecord {
            sample_id,
            subject_id: row[1].to_string(),
            modality,
            cohort,
            features,
        });
    }
    Ok(records)
}

pub fn read_manifest(
    manifest: &Path,
    embeddings: Option<&Path>,
    options: ValidationOptions,
) -> Result<DatasetManifest, FormatError> {
    let records = read_manifest_records(manifest, embeddings)?;
    Ok(validate_manifest(records, options)?)
}

/// Paths written by [`write_manifest_files`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFiles {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub sidecar: PathBuf,
}

/// Writes `manifest.csv`, `embeddings.jsonl` and its sidecar into `dir`.
pub fn write_manifest_files(manifest: &DatasetManifest, dir: &Path) -> Result<WrittenFiles, FormatError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let embeddings_path = dir.join("embeddings.jsonl");
    let sidecar = sidecar_path(&embeddings_path);

    let mut w = csv::Writer::from_path(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    w.write_record(["sample_id", "subject_id", "modality", "cohort", "features"])
        .map_err(|e| io_err(&manifest_path, e))?;
    let mut lines = String::new();
    for s in manifest.samples() {
        w.write_record([
            s.sample_id.as_str(),
            &s.subject_id,
            s.modality.as_str(),
            s.cohort.as_str(),
            "-",
        ])
        .map_err(|e| io_err(&manifest_path, e))?;
        let row = EmbeddingRow {
            sample_id: s.sample_id.clone(),
            features: s.features.clone(),
        };
        lines.push_str(&serde_json::to_string(&row).map_err(|e| io_err(&embeddings_path, e))?);
        lines.push('\n');
    }
    w.flush().map_err(|e| io_err(&manifest_path, e))?;
    fs::write(&embeddings_path, lines).map_err(|e| io_err(&embeddings_path, e))?;

    let meta = EmbeddingsMeta {
        schema: EMBEDDINGS_SCHEMA.into(),
        version: FORMAT_VERSION,
        feature_dim: manifest.feature_dim(),
        count: manifest.len(),
    };
    let meta_text = serde_json::to_string_pretty(&meta).map_err(|e| io_err(&sidecar, e))?;
    fs::write(&sidecar, meta_text + "\n").map_err(|e| io_err(&sidecar, e))?;
    Ok(WrittenFiles {
        manifest: manifest_path,
        embeddings: embeddings_path,
        sidecar,
    })
}

#[derive(Serialize, Deserialize)]
struct StoredDataset {
    schema: String,
    version: u32,
    subject_count: usize,
    feature_dim: usize,
    samples: Vec<SampleRecord>,
}

pub fn save_dataset(manifest: &DatasetManifest, path: &Path) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let stored = StoredDataset {
        schema: DATASET_SCHEMA.into(),
        version: FORMAT_VERSION,
        subject_count: manifest.subject_count(),
        feature_dim: manifest.feature_dim(),
        samples: manifest.samples().to_vec(),
    };
    let text = serde_json::to_string(&stored).map_err(|e| io_err(path, e))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Loads a stored dataset and re-validates it.
pub fn load_dataset(path: &Path) -> Result<DatasetManifest, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let stored: StoredDataset = serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if stored.schema != DATASET_SCHEMA {
        return Err(FormatError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected schema `{}`", stored.schema),
        });
    }
    Ok(validate_manifest(stored.samples, ValidationOptions::default())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_vectors() {
        assert_eq!(parse_inline("1 2.5;-3"), Some(vec![1.0, 2.5, -3.0]));
        assert_eq!(parse_inline("emb/other.jsonl"), None);
        assert_eq!(parse_inline(" "), None);
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("a/emb.jsonl")),
            PathBuf::from("a/emb.jsonl.meta.json")
        );
    }
}
