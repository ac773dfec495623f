//! CLI stages and their on-disk artifacts.
//!
//! Layout under the output directory:
//! `seed-<s>/lr.json`, `seed-<s>/hdr.json` (fit), `seed-<s>/metrics.json`
//! (evaluate), `seed-<s>/samples.csv` (recalibrate), and the report files at
//! the top level (report).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use latrec::hdr::{BaseModel, HdrRecalibrator};
use latrec::rng::derive_seed;
use latrec::{FittedMap, RadialRecalibrator};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_error, BenchError, Result};
use crate::experiment::{evaluate_methods, fit_methods, prepare, Fitted, SeedResult, HDR_R, LR};
use crate::model::Flow;
use crate::report::{Report, SeedFailure};

const HDR_FORMAT: &str = "latrec-hdr-recalibrator";
const SAMPLE_SEED: u64 = 9;

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

#[derive(Serialize, Deserialize)]
struct HdrState {
    format: String,
    version: u32,
    budget: usize,
    map: FittedMap<f64>,
}

fn write(path: PathBuf, body: String) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    std::fs::write(&path, body).map_err(io_error(path))
}

fn read(path: PathBuf) -> Result<String> {
    std::fs::read_to_string(&path).map_err(io_error(path))
}

pub fn save_fitted(dir: &Path, fitted: &Fitted) -> Result<()> {
    write(dir.join("lr.json"), fitted.lr.to_json()?)?;
    let state = HdrState {
        format: HDR_FORMAT.into(),
        version: 1,
        budget: fitted.hdr.budget(),
        map: fitted.hdr.map().clone(),
    };
    write(dir.join("hdr.json"), serde_json::to_string_pretty(&state)?)
}

pub fn load_fitted(dir: &Path, flow: &Flow) -> Result<Fitted> {
    let lr = RadialRecalibrator::from_json(&read(dir.join("lr.json"))?, flow.clone())?;
    let state: HdrState = serde_json::from_str(&read(dir.join("hdr.json"))?)?;
    if state.format != HDR_FORMAT || state.version != 1 {
        return Err(BenchError::Model(format!(
            "unsupported HDR artifact {} v{}",
            state.format, state.version
        )));
    }
    let hdr = HdrRecalibrator::new(Arc::new(BaseModel(flow.clone())), state.map, state.budget)?;
    Ok(Fitted { lr, hdr })
}

/// Outcome of one stage over all seeds.
#[derive(Debug, Default)]
pub struct StageOutcome {
    pub completed: Vec<u64>,
    pub failures: Vec<SeedFailure>,
}

impl StageOutcome {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn each_seed(seeds: &[u64], stage: &str, mut job: impl FnMut(u64) -> Result<()>) -> StageOutcome {
    let mut outcome = StageOutcome::default();
    for &seed in seeds {
        match job(seed) {
            Ok(()) => {
                log::info!("{stage}: seed {seed} done");
                outcome.completed.push(seed);
            }
            Err(e) => {
                log::error!("{stage}: seed {seed} failed: {e}");
                outcome.failures.push(SeedFailure {
                    seed,
                    reason: e.to_string(),
                });
            }
        }
    }
    outcome
}

/// Fits LR and HDR-R for every seed.
pub fn fit(cfg: &ExperimentConfig, seeds: &[u64]) -> StageOutcome {
    each_seed(seeds, "fit", |seed| {
        let prep = prepare(cfg, seed)?;
        let fitted = fit_methods(&prep.flow, &prep.calibration, cfg, seed)?;
        save_fitted(&seed_dir(&cfg.output_dir, seed), &fitted)
    })
}

/// Scores the fitted methods on the test split of every seed.
pub fn evaluate(cfg: &ExperimentConfig, seeds: &[u64]) -> StageOutcome {
    each_seed(seeds, "evaluate", |seed| {
        let dir = seed_dir(&cfg.output_dir, seed);
        let prep = prepare(cfg, seed)?;
        let fitted = load_fitted(&dir, &prep.flow)?;
        let result = evaluate_methods(&prep.flow, &fitted, &prep.test, cfg.into(), seed)?;
        write(dir.join("metrics.json"), serde_json::to_string_pretty(&result)?)
    })
}

/// Writes `K` LR and HDR-R draws per test row, in normalized units.
pub fn recalibrate(cfg: &ExperimentConfig, seeds: &[u64]) -> StageOutcome {
    each_seed(seeds, "recalibrate", |seed| {
        let dir = seed_dir(&cfg.output_dir, seed);
        let prep = prepare(cfg, seed)?;
        let fitted = load_fitted(&dir, &prep.flow)?;
        let d = prep.flow.dim();
        let k = cfg.energy_samples;
        let mut out = String::from("method,row,draw");
        for j in 0..d {
            out.push_str(&format!(",y{j}"));
        }
        out.push('\n');
        let mut emit = |method: &str, row: usize, draws: &[Vec<f64>]| {
            for (i, y) in draws.iter().enumerate() {
                out.push_str(&format!("{method},{row},{i}"));
                for v in y {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        };
        let base_seed = derive_seed(seed, &[SAMPLE_SEED]);
        for (row, x) in prep.test.x.iter().enumerate() {
            let s = derive_seed(base_seed, &[row as u64]);
            emit(LR, row, &fitted.lr.sample_direct(x, k, s)?);
            let hdr = fitted.hdr.hdr_recalibrate_samples(x, s)?;
            let step = (hdr.samples.len() / k).max(1);
            let thinned: Vec<Vec<f64>> = hdr.samples.iter().step_by(step).take(k).cloned().collect();
            emit(HDR_R, row, &thinned);
        }
        write(dir.join("samples.csv"), out)
    })
}

/// Aggregates the per-seed metrics into the report files. Seeds without
/// metrics are listed as failures.
pub fn report(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Report> {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        let path = seed_dir(&cfg.output_dir, seed).join("metrics.json");
        match read(path).and_then(|s| Ok(serde_json::from_str::<SeedResult>(&s)?)) {
            Ok(r) => results.push(r),
            Err(e) => failures.push(SeedFailure {
                seed,
                reason: e.to_string(),
            }),
        }
    }
    let report = Report::aggregate(cfg, &results, failures)?;
    report.write(&cfg.output_dir)?;
    Ok(report)
}

/// Fit, evaluate and report in one go; a seed that fails a stage is skipped
/// by the later ones.
pub fn run(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Report> {
    let fitted = fit(cfg, seeds);
    let evaluated = evaluate(cfg, &fitted.completed);
    let mut report = report(cfg, &evaluated.completed)?;
    let mut failures = fitted.failures;
    failures.extend(evaluated.failures);
    failures.extend(report.failures);
    failures.sort_by_key(|f| f.seed);
    report.failures = failures;
    report.write(&cfg.output_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::tests::small_config;
    use latrec::flow::synthetic::TaskKind;

    #[test]
    fn stages_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(TaskKind::ScaleMisspecified { std_ratio: 2.0 });
        cfg.output_dir = dir.path().to_path_buf();
        let seeds = [4];
        assert!(fit(&cfg, &seeds).is_success());
        assert!(evaluate(&cfg, &seeds).is_success());
        assert!(recalibrate(&cfg, &seeds).is_success());
        let report = report(&cfg, &seeds).unwrap();
        assert!(report.is_complete());
        let direct = crate::run_seed(&cfg, 4).unwrap();
        let stored: SeedResult = serde_json::from_str(&read(seed_dir(dir.path(), 4).join("metrics.json")).unwrap()).unwrap();
        assert_eq!(stored, direct);
        let samples = read(seed_dir(dir.path(), 4).join("samples.csv")).unwrap();
        assert_eq!(samples.lines().count(), 1 + 150 * 2 * 20);
    }

    #[test]
    fn missing_artifacts_are_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(TaskKind::WellSpecified);
        cfg.output_dir = dir.path().to_path_buf();
        let out = evaluate(&cfg, &[0, 1]);
        assert_eq!(out.failures.len(), 2);
        let r = report(&cfg, &[0]).unwrap();
        assert!(!r.is_complete());
        assert!(dir.path().join(crate::report::REPORT_FILE).exists());
    }
}
