//! One seed of the BASE / LR / HDR-R comparison.

use std::collections::BTreeMap;
use std::sync::Arc;

use latrec::hdr::{hpd, hpd_from_log_densities, BaseModel, HdrRecalibrator};
use latrec::metrics::{energy_score, hdr_ece, l_ece, nll_mean, MethodScores};
use latrec::rng::{derive_seed, stream};
use latrec::{base_log_density, flow::synthetic::SyntheticTask, latent_norm, sample_base, CalibrationMap, RadialRecalibrator};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{CalibrationSplit, DataSource, ExperimentConfig};
use crate::dataset::{ingest_csv, split_indices, Dataset, Normalization, Part};
use crate::error::Result;
use crate::model::{fit_linear_gaussian, normalized_view, Flow};

pub const BASE: &str = "BASE";
pub const LR: &str = "LR";
pub const HDR_R: &str = "HDR-R";

// stream tags under the run seed
const DATA: u64 = 1;
const HDR_FIT: u64 = 2;
const HPD_BASE: u64 = 3;
const HPD_LR: u64 = 4;
const HDR_DRAWS: u64 = 5;
const ES_BASE: u64 = 6;
const ES_LR: u64 = 7;
const ES_HDR: u64 = 8;

/// Normalized splits and the base flow of one seed.
pub struct Prepared {
    pub flow: Flow,
    pub normalization: Normalization,
    pub train: Part,
    /// Validation rows not used for calibration (empty unless the
    /// calibration split is dedicated).
    pub validation: Part,
    pub calibration: Part,
    pub test: Part,
}

fn load(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic { task, dim, rows } => {
            let (x, y) = SyntheticTask::new(*task, *dim).sample::<f64>(*rows, derive_seed(seed, &[DATA]));
            Ok(Dataset {
                x,
                y,
                covariate_names: (0..latrec::flow::synthetic::COVARIATES).map(|j| format!("x{j}")).collect(),
                response_names: (0..*dim).map(|k| format!("y{k}")).collect(),
            })
        }
        DataSource::Csv {
            path,
            covariates,
            responses,
        } => ingest_csv(path, covariates, responses),
    }
}

/// Splits, normalizes with training statistics and builds the base flow.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let data = load(cfg, seed)?;
    let split = split_indices(data.len(), cfg.splits, seed)?;
    let raw_train = data.rows(&split.train);
    let normalization = Normalization::fit(&raw_train)?;
    let train = normalization.apply(&raw_train);
    let mut validation = normalization.apply(&data.rows(&split.validation));
    let test = normalization.apply(&data.rows(&split.test));
    let calibration = match cfg.calibration_split {
        CalibrationSplit::Validation => std::mem::take(&mut validation),
        CalibrationSplit::Dedicated => {
            let half = validation.len() / 2;
            Part {
                x: validation.x.split_off(half),
                y: validation.y.split_off(half),
            }
        }
    };
    let flow: Flow = match &cfg.data {
        DataSource::Synthetic { task, dim, .. } => {
            normalized_view(Arc::new(SyntheticTask::new(*task, *dim).base_flow::<f64>()), &normalization)?
        }
        DataSource::Csv { .. } => Arc::new(fit_linear_gaussian(&train)?),
    };
    Ok(Prepared {
        flow,
        normalization,
        train,
        validation,
        calibration,
        test,
    })
}

/// The fitted recalibrators of one seed.
pub struct Fitted {
    pub lr: RadialRecalibrator<f64>,
    pub hdr: HdrRecalibrator<f64>,
}

/// Fits LR and HDR-R on `calibration` only.
pub fn fit_methods(flow: &Flow, calibration: &Part, cfg: &ExperimentConfig, seed: u64) -> Result<Fitted> {
    let lr = RadialRecalibrator::fit(flow.clone(), &calibration.x, &calibration.y, &cfg.estimator)?;
    let hdr = HdrRecalibrator::fit(
        Arc::new(BaseModel(flow.clone())),
        &calibration.x,
        &calibration.y,
        cfg.hpd_samples,
        derive_seed(seed, &[HDR_FIT]),
    )?;
    Ok(Fitted { lr, hdr })
}

/// Which metrics to compute. A zero budget skips the metrics that need it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    /// HPD pre-ranks, HDR-ECE and everything about HDR-R.
    pub hpd_samples: usize,
    /// Energy scores.
    pub energy_samples: usize,
}

impl From<&ExperimentConfig> for Budgets {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            hpd_samples: cfg.hpd_samples,
            energy_samples: cfg.energy_samples,
        }
    }
}

/// Test-split scores and per-point pre-ranks of every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub scores: BTreeMap<String, MethodScores>,
    /// Latent-norm PITs per method.
    pub latent_pits: BTreeMap<String, Vec<f64>>,
    /// HPD pre-ranks per method.
    pub hpd: BTreeMap<String, Vec<f64>>,
}

fn pick<T: Clone>(draws: &[T], k: usize, seed: u64) -> Vec<T> {
    let mut rng = stream(seed);
    (0..k).map(|_| draws[rng.random_range(0..draws.len())].clone()).collect()
}

/// Scores BASE, LR and HDR-R on `test`.
pub fn evaluate_methods(flow: &Flow, fitted: &Fitted, test: &Part, budgets: Budgets, seed: u64) -> Result<SeedResult> {
    let (xs, ys) = (&test.x, &test.y);
    let law = flow.latent().norm_law();
    let lr = &fitted.lr;
    let smooth = lr.map().is_smooth();
    let base_model = BaseModel(flow.clone());
    let mut scores: BTreeMap<String, MethodScores> = BTreeMap::new();
    let mut latent_pits = BTreeMap::new();
    let mut hpds = BTreeMap::new();

    let mut base = MethodScores::default();
    let mut rec = MethodScores::default();

    let norms: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| latent_norm(flow.as_ref(), x, y))
        .collect::<latrec::Result<_>>()?;
    let base_pits: Vec<f64> = norms.iter().map(|&l| law.cdf(l)).collect::<latrec::Result<_>>()?;
    let lr_pits: Vec<f64> = norms.iter().map(|&l| lr.map().cdf(l)).collect::<latrec::Result<_>>()?;
    base.l_ece = Some(l_ece(&base_pits)?);
    rec.l_ece = Some(l_ece(&lr_pits)?);
    latent_pits.insert(BASE.to_string(), base_pits);
    latent_pits.insert(LR.to_string(), lr_pits);

    let base_ld: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| base_log_density(flow.as_ref(), x, y))
        .collect::<latrec::Result<_>>()?;
    base.nll = Some(nll_mean(&base_ld)?);
    if smooth {
        let lr_ld: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| lr.recalibrated_log_density(x, y))
            .collect::<latrec::Result<_>>()?;
        rec.nll = Some(nll_mean(&lr_ld)?);
    }

    let m = budgets.hpd_samples;
    let mut hdr_scores = None;
    if m > 0 {
        let pre = |model: &dyn latrec::DensityModel<f64>, tag: u64| -> Result<Vec<f64>> {
            xs.iter()
                .zip(ys)
                .enumerate()
                .map(|(i, (x, y))| Ok(hpd(model, x, y, m, derive_seed(seed, &[tag, i as u64]))?))
                .collect()
        };
        let base_hpd = pre(&base_model, HPD_BASE)?;
        base.hdr_ece = Some(hdr_ece(&base_hpd)?);
        hpds.insert(BASE.to_string(), base_hpd);
        if smooth {
            let lr_hpd = pre(lr, HPD_LR)?;
            rec.hdr_ece = Some(hdr_ece(&lr_hpd)?);
            hpds.insert(LR.to_string(), lr_hpd);
        }
        let hdr_hpd: Vec<f64> = xs
            .iter()
            .zip(&base_ld)
            .enumerate()
            .map(|(i, (x, &ld))| {
                let draws = fitted.hdr.hdr_recalibrate_samples(x, derive_seed(seed, &[HDR_DRAWS, i as u64]))?;
                Ok(hpd_from_log_densities(&draws.log_densities, ld)?)
            })
            .collect::<Result<_>>()?;
        hdr_scores = Some(MethodScores {
            hdr_ece: Some(hdr_ece(&hdr_hpd)?),
            ..Default::default()
        });
        hpds.insert(HDR_R.to_string(), hdr_hpd);
    }

    let k = budgets.energy_samples;
    if k > 0 {
        base.energy_score = Some(energy_score(
            ys,
            |i, s, k| sample_base(flow.as_ref(), &xs[i], k, s),
            k,
            derive_seed(seed, &[ES_BASE]),
        )?);
        rec.energy_score = Some(energy_score(
            ys,
            |i, s, k| lr.sample_direct(&xs[i], k, s),
            k,
            derive_seed(seed, &[ES_LR]),
        )?);
        if let Some(h) = hdr_scores.as_mut() {
            h.energy_score = Some(energy_score(
                ys,
                |i, s, k| {
                    let draws = fitted.hdr.hdr_recalibrate_samples(&xs[i], s)?;
                    Ok(pick(&draws.samples, k, derive_seed(s, &[1])))
                },
                k,
                derive_seed(seed, &[ES_HDR]),
            )?);
        }
    }

    scores.insert(BASE.to_string(), base);
    scores.insert(LR.to_string(), rec);
    if let Some(h) = hdr_scores {
        scores.insert(HDR_R.to_string(), h);
    }
    let mut report = latrec::metrics::MetricsReport {
        methods: scores,
        reliability: BTreeMap::new(),
    };
    report.fill_relative(BASE)?;
    Ok(SeedResult {
        seed,
        scores: report.methods,
        latent_pits,
        hpd: hpds,
    })
}

/// Prepare, fit and evaluate one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let prep = prepare(cfg, seed)?;
    let fitted = fit_methods(&prep.flow, &prep.calibration, cfg, seed)?;
    evaluate_methods(&prep.flow, &fitted, &prep.test, cfg.into(), seed)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use latrec::flow::synthetic::TaskKind;

    pub(crate) fn small_config(task: TaskKind) -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic { task, dim: 2, rows: 1000 },
            splits: [0.65, 0.2, 0.15],
            seeds: vec![0, 1],
            estimator: latrec::Estimator::default(),
            calibration_split: CalibrationSplit::Validation,
            hpd_samples: 100,
            energy_samples: 20,
            curve_points: 11,
            output_dir: "unused".into(),
        }
    }

    #[test]
    fn prepared_splits_are_normalized_on_train() {
        let cfg = small_config(TaskKind::WellSpecified);
        let p = prepare(&cfg, 0).unwrap();
        assert_eq!(
            (p.train.len(), p.calibration.len(), p.test.len(), p.validation.len()),
            (650, 200, 150, 0)
        );
        let mean: f64 = p.train.y.iter().map(|y| y[0]).sum::<f64>() / 650.0;
        assert!(mean.abs() < 1e-12);
        let mut dedicated = cfg.clone();
        dedicated.calibration_split = CalibrationSplit::Dedicated;
        let q = prepare(&dedicated, 0).unwrap();
        assert_eq!((q.validation.len(), q.calibration.len()), (100, 100));
        assert_eq!(q.calibration.y[..], p.calibration.y[100..]);
    }

    #[test]
    fn seed_result_has_every_method() {
        let cfg = small_config(TaskKind::ScaleMisspecified { std_ratio: 2.0 });
        let r = run_seed(&cfg, 3).unwrap();
        assert_eq!(r.scores.keys().collect::<Vec<_>>(), vec![BASE, HDR_R, LR]);
        let (b, l, h) = (&r.scores[BASE], &r.scores[LR], &r.scores[HDR_R]);
        assert!(b.nll.is_some() && l.nll.is_some() && h.nll.is_none());
        assert!(l.l_ece.unwrap() < b.l_ece.unwrap());
        assert!(h.hdr_ece.unwrap() < b.hdr_ece.unwrap());
        assert_eq!(b.relative_nll, Some(0.0));
        assert_eq!(r.hpd[HDR_R].len(), 150);
        assert_eq!(r, run_seed(&cfg, 3).unwrap());
    }
}
