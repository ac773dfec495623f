//! Cross-seed aggregation and report files.

use std::collections::BTreeMap;
use std::path::Path;

use latrec::metrics::{reliability_curve, unit_grid, MethodScores, ReliabilityCurve};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_error, Result};
use crate::experiment::SeedResult;

pub const REPORT_FORMAT: &str = "latrec-report";
pub const REPORT_VERSION: u32 = 1;

pub const REPORT_FILE: &str = "report.json";
pub const LATENT_CURVES_FILE: &str = "reliability_latent.csv";
pub const HDR_CURVES_FILE: &str = "reliability_hdr.csv";

const BAND_LEVEL: f64 = 0.9;
const BAND_DRAWS: usize = 1000;
const BAND_SEED: u64 = 0x5eed;

/// Mean, standard error of the mean and per-seed values of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `None` with a single seed.
    pub std_error: Option<f64>,
    pub per_seed: Vec<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Some(Self {
            mean,
            std_error,
            per_seed: values.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    /// Seeds that completed, in config order.
    pub seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    /// method → metric → summary over the completed seeds.
    pub metrics: BTreeMap<String, BTreeMap<String, Summary>>,
    /// Pre-ranks pooled over seeds: latent-norm PITs per method.
    #[serde(skip)]
    pub latent_curves: BTreeMap<String, ReliabilityCurve>,
    /// Pre-ranks pooled over seeds: HPD per method.
    #[serde(skip)]
    pub hdr_curves: BTreeMap<String, ReliabilityCurve>,
}

fn metric_values(scores: &MethodScores) -> [(&'static str, Option<f64>); 7] {
    [
        ("nll", scores.nll),
        ("l_ece", scores.l_ece),
        ("hdr_ece", scores.hdr_ece),
        ("energy_score", scores.energy_score),
        ("bpd", scores.bpd),
        ("relative_nll", scores.relative_nll),
        ("relative_es", scores.relative_es),
    ]
}

fn pooled_curves(
    results: &[SeedResult],
    pick: impl Fn(&SeedResult) -> &BTreeMap<String, Vec<f64>>,
    grid: &[f64],
) -> Result<BTreeMap<String, ReliabilityCurve>> {
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        for (method, v) in pick(r) {
            pooled.entry(method.clone()).or_default().extend(v);
        }
    }
    pooled
        .into_iter()
        .map(|(m, v)| Ok((m, reliability_curve(&v, grid, BAND_LEVEL, BAND_DRAWS, BAND_SEED)?)))
        .collect()
}

impl Report {
    /// Aggregates completed seeds; `failures` are listed as they are.
    pub fn aggregate(config: &ExperimentConfig, results: &[SeedResult], failures: Vec<SeedFailure>) -> Result<Self> {
        let mut values: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        for r in results {
            for (method, scores) in &r.scores {
                for (name, v) in metric_values(scores) {
                    if let Some(v) = v {
                        values
                            .entry(method.clone())
                            .or_default()
                            .entry(name.to_string())
                            .or_default()
                            .push(v);
                    }
                }
            }
        }
        let metrics = values
            .into_iter()
            .map(|(m, by)| (m, by.into_iter().filter_map(|(k, v)| Summary::of(&v).map(|s| (k, s))).collect()))
            .collect();
        let grid = unit_grid(config.curve_points);
        Ok(Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            config: config.clone(),
            seeds: results.iter().map(|r| r.seed).collect(),
            failures,
            metrics,
            latent_curves: pooled_curves(results, |r| &r.latent_pits, &grid)?,
            hdr_curves: pooled_curves(results, |r| &r.hpd, &grid)?,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn mean(&self, method: &str, metric: &str) -> Option<f64> {
        self.metrics.get(method)?.get(metric).map(|s| s.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes the JSON report and both curve files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
        let put = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io_error(path))
        };
        put(REPORT_FILE, self.to_json()?)?;
        put(LATENT_CURVES_FILE, curves_csv(&self.latent_curves))?;
        put(HDR_CURVES_FILE, curves_csv(&self.hdr_curves))?;
        Ok(())
    }
}

/// Long-format curve table: `method,alpha,empirical,band_lo,band_hi`.
pub fn curves_csv(curves: &BTreeMap<String, ReliabilityCurve>) -> String {
    let mut out = String::from("method,alpha,empirical,band_lo,band_hi\n");
    for (method, curve) in curves {
        for p in &curve.points {
            out.push_str(&format!("{method},{},{},{},{}\n", p.alpha, p.empirical, p.band_lo, p.band_hi));
        }
    }
    out
}
