//! Highest-predictive-density pre-ranks and the sample-based HDR
//! recalibration baseline.
//!
//! Orientation: `hpd` returns `S = HPD(y | x)`, the probability mass of
//! responses at least as dense as `y`; the recalibration map is fitted on
//! `U = 1 - S`.

use std::sync::Arc;

use crate::calibration::{CalibrationMap, EmpiricalCdfMap, FittedMap};
use crate::error::{domain, Error, Result};
use crate::flow::ConditionalFlow;
use crate::recal::RadialRecalibrator;
use crate::rng::{derive_seed, stream};
use crate::scalar::Real;

/// Default Monte Carlo budget `M`.
pub const DEFAULT_BUDGET: usize = 1000;

/// A predictive model that can evaluate and sample its density.
pub trait DensityModel<T: Real>: Send + Sync {
    fn log_density(&self, x: &[T], y: &[T]) -> Result<T>;

    /// `count` draws, each with its log-density.
    fn sample_with_log_density(&self, x: &[T], count: usize, seed: u64) -> Result<Vec<(Vec<T>, T)>>;
}

/// The unrecalibrated flow as a [`DensityModel`].
#[derive(Clone)]
pub struct BaseModel<T: Real>(pub Arc<dyn ConditionalFlow<T>>);

impl<T: Real> DensityModel<T> for BaseModel<T> {
    fn log_density(&self, x: &[T], y: &[T]) -> Result<T> {
        crate::flow::base_log_density(self.0.as_ref(), x, y)
    }

    fn sample_with_log_density(&self, x: &[T], count: usize, seed: u64) -> Result<Vec<(Vec<T>, T)>> {
        if count == 0 {
            return Err(Error::Empty("sample count must be >= 1".into()));
        }
        let latent = self.0.latent();
        let mut rng = stream(derive_seed(seed, &[0x4844, 1]));
        (0..count)
            .map(|_| {
                let z = latent.sample::<T, _>(&mut rng);
                let (y, ild) = self.0.forward_with_log_det(&z, x)?;
                Ok((y, latent.log_density(&z) + ild))
            })
            .collect()
    }
}

impl<T: Real> DensityModel<T> for RadialRecalibrator<T> {
    fn log_density(&self, x: &[T], y: &[T]) -> Result<T> {
        self.recalibrated_log_density(x, y)
    }

    fn sample_with_log_density(&self, x: &[T], count: usize, seed: u64) -> Result<Vec<(Vec<T>, T)>> {
        self.sample_direct_with_log_density(x, count, seed)
    }
}

/// Fraction of `sample_log_densities` that are `>= log_density`.
pub fn hpd_from_log_densities<T: Real>(sample_log_densities: &[T], log_density: T) -> Result<T> {
    if sample_log_densities.is_empty() {
        return Err(Error::Empty("hpd: no samples".into()));
    }
    let above = sample_log_densities.iter().filter(|&&d| d >= log_density).count();
    Ok(T::from_usize_lossy(above) / T::from_usize_lossy(sample_log_densities.len()))
}

/// Monte Carlo `HPD(y | x)` from `budget` model samples.
pub fn hpd<T: Real, M: DensityModel<T> + ?Sized>(model: &M, x: &[T], y: &[T], budget: usize, seed: u64) -> Result<T> {
    let target = model.log_density(x, y)?;
    let lds: Vec<T> = model
        .sample_with_log_density(x, budget, seed)?
        .into_iter()
        .map(|(_, d)| d)
        .collect();
    hpd_from_log_densities(&lds, target)
}

/// Resampled draws of the HDR recalibration.
#[derive(Debug, Clone)]
pub struct HdrSamples<T: Real> {
    pub samples: Vec<Vec<T>>,
    /// Base-model log-densities of `samples`.
    pub log_densities: Vec<T>,
    /// All base densities were equal, so the draws were returned unchanged.
    pub degenerate: bool,
}

/// HDR recalibration: base samples are reindexed so that their HPD pre-ranks
/// follow the calibration distribution of `U = 1 - HPD`.
#[derive(Clone)]
pub struct HdrRecalibrator<T: Real> {
    model: Arc<dyn DensityModel<T>>,
    map: FittedMap<T>,
    budget: usize,
}

fn check_budget(budget: usize) -> Result<()> {
    if budget < 2 {
        return Err(domain("hdr", format!("sample budget must be >= 2, got {budget}")));
    }
    Ok(())
}

impl<T: Real> HdrRecalibrator<T> {
    /// Uses `map` as `F̂_U`.
    pub fn new(model: Arc<dyn DensityModel<T>>, map: FittedMap<T>, budget: usize) -> Result<Self> {
        check_budget(budget)?;
        Ok(Self { model, map, budget })
    }

    /// Fits the empirical `F̂_U` on calibration pairs.
    pub fn fit(model: Arc<dyn DensityModel<T>>, xs: &[Vec<T>], ys: &[Vec<T>], budget: usize, seed: u64) -> Result<Self> {
        check_budget(budget)?;
        if xs.len() != ys.len() {
            return Err(domain("hdr fit", format!("{} covariate rows but {} responses", xs.len(), ys.len())));
        }
        let u: Vec<T> = xs
            .iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (x, y))| Ok(T::one() - hpd(model.as_ref(), x, y, budget, derive_seed(seed, &[i as u64]))?))
            .collect::<Result<_>>()?;
        let map = FittedMap::Empirical(EmpiricalCdfMap::fit(&u)?);
        Ok(Self { model, map, budget })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn map(&self) -> &FittedMap<T> {
        &self.map
    }

    /// `M` recalibrated draws at `x`: base draws sorted by increasing density
    /// (so the `j`-th has `U ≈ j / M`), and for `m = 1..=M` the draw with
    /// index `⌈M F̂_U^{-1}((m - 0.5) / M)⌉`. Draws repeat.
    pub fn hdr_recalibrate_samples(&self, x: &[T], seed: u64) -> Result<HdrSamples<T>> {
        let mut draws = self.model.sample_with_log_density(x, self.budget, seed)?;
        draws.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let (first, last) = (draws[0].1, draws[draws.len() - 1].1);
        if first == last {
            log::warn!(
                "hdr recalibration: all {} base densities are equal, returning base draws",
                draws.len()
            );
            let (samples, log_densities) = draws.into_iter().unzip();
            return Ok(HdrSamples {
                samples,
                log_densities,
                degenerate: true,
            });
        }
        let m = self.budget;
        let mf = T::from_usize_lossy(m);
        let mut samples = Vec::with_capacity(m);
        let mut log_densities = Vec::with_capacity(m);
        for k in 1..=m {
            let p = (T::from_usize_lossy(k) - T::c(0.5)) / mf;
            let target = self.map.quantile(p)?.min(T::one());
            let j = (mf * target).ceil().to_usize().unwrap_or(m).clamp(1, m);
            samples.push(draws[j - 1].0.clone());
            log_densities.push(draws[j - 1].1);
        }
        Ok(HdrSamples {
            samples,
            log_densities,
            degenerate: false,
        })
    }

    /// `HPD` of `y` against the recalibrated draws, measured with the base
    /// density.
    pub fn pre_rank(&self, x: &[T], y: &[T], seed: u64) -> Result<T> {
        let s = self.hdr_recalibrate_samples(x, seed)?;
        hpd_from_log_densities(&s.log_densities, self.model.log_density(x, y)?)
    }
}
