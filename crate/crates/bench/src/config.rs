//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use latrec::flow::synthetic::TaskKind;
use latrec::Estimator;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, BenchError, Result};

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Rows drawn from a synthetic task, fresh for every seed. The base flow
    /// is the task's fixed (possibly misspecified) model.
    Synthetic { task: TaskKind, dim: usize, rows: usize },
    /// A headed CSV file. The base model is a linear-Gaussian regression
    /// fitted on the training split.
    Csv {
        path: PathBuf,
        covariates: Vec<String>,
        responses: Vec<String>,
    },
}

/// Which rows the calibration maps are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSplit {
    /// The whole validation split.
    #[default]
    Validation,
    /// The second half of the validation split, kept apart from everything
    /// else.
    Dedicated,
}

fn default_splits() -> [f64; 3] {
    [0.65, 0.2, 0.15]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_hpd_samples() -> usize {
    latrec::hdr::DEFAULT_BUDGET
}

fn default_energy_samples() -> usize {
    100
}

fn default_curve_points() -> usize {
    21
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("latrec-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Train, validation and test fractions.
    #[serde(default = "default_splits")]
    pub splits: [f64; 3],
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub calibration_split: CalibrationSplit,
    /// `M`: Monte Carlo draws per point for HPD and HDR recalibration.
    #[serde(default = "default_hpd_samples")]
    pub hpd_samples: usize,
    /// `K`: draws per sample set for the energy score.
    #[serde(default = "default_energy_samples")]
    pub energy_samples: usize,
    /// Grid size of the reliability curves.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    /// Not part of the report, so runs into different directories compare
    /// equal.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative CSV path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSource::Csv { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.splits.iter().any(|f| !(*f > 0.0)) || (self.splits.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions must be positive and sum to 1, got {:?}", self.splits));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.hpd_samples < 2 || self.energy_samples < 2 || self.curve_points < 2 {
            return bad("hpd_samples, energy_samples and curve_points must be >= 2".into());
        }
        match &self.data {
            DataSource::Synthetic { dim, rows, .. } if *dim == 0 || *rows == 0 => bad("synthetic tasks need dim >= 1 and rows >= 1".into()),
            DataSource::Csv { responses, .. } if responses.is_empty() => bad("no response columns".into()),
            _ => Ok(()),
        }
    }
}
