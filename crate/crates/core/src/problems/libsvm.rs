//! The sparse text format `label idx:val idx:val ...` with 1-based,
//! strictly ascending indices.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sha256_hex, LogisticRegression};
use crate::error::{Error, Result};

/// How raw labels were mapped onto {-1, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMapping {
    /// already -1 / +1
    Signed,
    /// 0 -> -1, 1 -> +1
    ZeroOne,
    /// 1 -> -1, 2 -> +1
    OneTwo,
}

impl LabelMapping {
    fn infer(labels: &[f64]) -> Result<Self> {
        let mut distinct: Vec<f64> = Vec::new();
        for &l in labels {
            if !distinct.contains(&l) {
                distinct.push(l);
            }
        }
        if distinct.len() > 2 {
            return Err(Error::LabelDomain(format!("{} distinct labels, expected at most 2", distinct.len())));
        }
        let within = |set: &[f64]| distinct.iter().all(|l| set.contains(l));
        if within(&[-1.0, 1.0]) {
            Ok(Self::Signed)
        } else if within(&[0.0, 1.0]) {
            Ok(Self::ZeroOne)
        } else if within(&[1.0, 2.0]) {
            Ok(Self::OneTwo)
        } else {
            Err(Error::LabelDomain(format!("unsupported label values {distinct:?}")))
        }
    }

    fn map(self, l: f64) -> f64 {
        let positive = match self {
            Self::Signed | Self::ZeroOne => l == 1.0,
            Self::OneTwo => l == 2.0,
        };
        if positive {
            1.0
        } else {
            -1.0
        }
    }
}

/// Ingest record for a dataset file. `d` counts samples, `n` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub path: String,
    pub sha256: String,
    pub d: usize,
    pub n: usize,
    pub label_mapping: LabelMapping,
}

type SparseRow = Vec<(usize, f64)>;

fn parse_rows(text: &str) -> Result<(Vec<f64>, Vec<SparseRow>)> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad label {label_tok:?}"),
        })?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line,
                    message: "indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(Error::Parse {
                    line,
                    message: format!("index {idx} not ascending"),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: "non-finite feature".into(),
                });
            }
            last = idx;
            row.push((idx, val));
        }
        labels.push(label);
        rows.push(row);
    }
    Ok((labels, rows))
}

/// Parses libsvm text. The feature count is the largest index seen unless
/// `n_override` is given (which must not be smaller).
pub fn parse_libsvm(text: &str, n_override: Option<usize>) -> Result<(LogisticRegression, LabelMapping)> {
    let (raw_labels, rows) = parse_rows(text)?;
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }
    let max_idx = rows.iter().filter_map(|r| r.last().map(|(i, _)| *i)).max().unwrap_or(0);
    let n = match n_override {
        Some(n) if n < max_idx => {
            return Err(Error::InvalidArgument(format!("override n = {n} below max index {max_idx}")))
        }
        Some(n) => n,
        None => max_idx,
    };
    let mapping = LabelMapping::infer(&raw_labels)?;
    let mut features = DMatrix::zeros(rows.len(), n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[(i, j - 1)] = v;
        }
    }
    let labels = DVector::from_iterator(raw_labels.len(), raw_labels.iter().map(|&l| mapping.map(l)));
    Ok((LogisticRegression::new(features, labels)?, mapping))
}

pub fn load_libsvm(path: &Path, n_override: Option<usize>) -> Result<(LogisticRegression, Dataset)> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let (problem, label_mapping) = parse_libsvm(&text, n_override)?;
    let dataset = Dataset {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        d: problem.samples(),
        n: problem.features().ncols(),
        label_mapping,
    };
    Ok((problem, dataset))
}

/// Serializes with shortest round-trip float formatting; zeros are omitted.
pub fn format_libsvm(problem: &LogisticRegression) -> String {
    let mut out = String::new();
    for (i, row) in problem.features().row_iter().enumerate() {
        let label = if problem.labels()[i] > 0.0 { "+1" } else { "-1" };
        out.push_str(label);
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {}:{:e}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(problem: &LogisticRegression, path: &Path) -> Result<()> {
    std::fs::write(path, format_libsvm(problem))?;
    Ok(())
}
