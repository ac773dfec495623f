//! Tabular data, deterministic splits and train-set normalization.

use std::path::Path;

use latrec::rng::{derive_seed, stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub response_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows at `idx`, in that order.
    pub fn rows(&self, idx: &[usize]) -> Part {
        Part {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i].clone()).collect(),
        }
    }
}

/// Reads `covariates` and `responses` columns from a headed CSV file.
pub fn ingest_csv(path: &Path, covariates: &[String], responses: &[String]) -> Result<Dataset> {
    let csv_err = |e: csv::Error| BenchError::Csv {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    if responses.is_empty() {
        return Err(BenchError::Config("at least one response column is required".into()));
    }
    let file = std::fs::File::open(path).map_err(crate::error::io_error(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(csv_err)?.clone();
    let locate = |names: &[String]| -> Result<Vec<usize>> {
        names
            .iter()
            .map(|c| {
                header.iter().position(|h| h == c).ok_or_else(|| BenchError::MissingColumn {
                    path: path.to_path_buf(),
                    column: c.clone(),
                })
            })
            .collect()
    };
    let (xi, yi) = (locate(covariates)?, locate(responses)?);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = r + 1;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            let bad = |detail: String| BenchError::Cell {
                path: path.to_path_buf(),
                row,
                column: header[i].to_string(),
                detail,
            };
            let v: f64 = raw.parse().map_err(|_| bad(format!("not a number: {raw:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("non-finite value {raw:?}")))
            }
        };
        x.push(xi.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        y.push(yi.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
    }
    if y.is_empty() {
        return Err(BenchError::EmptyDataset(path.to_path_buf()));
    }
    Ok(Dataset {
        x,
        y,
        covariate_names: covariates.to_vec(),
        response_names: responses.to_vec(),
    })
}

/// Rows of one split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Part {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl Part {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Row indices of the train, validation and test splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with a stream of `seed` and cuts it by `fractions`.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<SplitIndices> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(derive_seed(seed, &[0x5917])));
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = (fractions[1] * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(BenchError::Config(format!(
            "{n} rows cannot be split {fractions:?} into non-empty parts"
        )));
    }
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(SplitIndices {
        train: idx,
        validation,
        test,
    })
}

/// Per-column affine standardization fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_sd: Vec<f64>,
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let p = rows.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd = (0..p)
        .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    (mean, sd)
}

fn scale(rows: &[Vec<f64>], mean: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().zip(mean.iter().zip(sd)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect()
}

impl Normalization {
    /// Zero-mean, unit-variance constants of `train`. Constant covariates keep
    /// a unit scale; a constant response is an error.
    pub fn fit(train: &Part) -> Result<Self> {
        if train.is_empty() {
            return Err(BenchError::Config("empty training split".into()));
        }
        let (x_mean, mut x_sd) = column_stats(&train.x);
        let (y_mean, y_sd) = column_stats(&train.y);
        for (j, s) in x_sd.iter_mut().enumerate() {
            if *s == 0.0 {
                log::warn!("covariate {j} is constant on the training split");
                *s = 1.0;
            }
        }
        if let Some(j) = y_sd.iter().position(|&s| s == 0.0) {
            return Err(BenchError::Model(format!("response {j} is constant on the training split")));
        }
        Ok(Self {
            x_mean,
            x_sd,
            y_mean,
            y_sd,
        })
    }

    pub fn apply(&self, part: &Part) -> Part {
        Part {
            x: scale(&part.x, &self.x_mean, &self.x_sd),
            y: scale(&part.y, &self.y_mean, &self.y_sd),
        }
    }
}
