//! Estimators of `F_L`, the distribution of calibration latent norms.
//!
//! All maps work with `(ln F, ln(1 - F))` pairs and quantiles indexed by a
//! log-probability of either tail, so that composing them with a norm law
//! keeps precision far into both tails.

mod empirical;
mod gamma_kde;
mod law;
mod spline;

pub use empirical::EmpiricalCdfMap;
pub use gamma_kde::{lambda_grid, GammaKdeMap, KdeOptions};
pub use law::LawMap;
pub use spline::{bins_for, SplineMap, SplineOptions};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::open_unit;
use crate::scalar::Real;

/// A fitted estimate of the CDF of latent norms.
pub trait CalibrationMap<T: Real>: Send + Sync {
    /// Number of calibration norms behind the estimate.
    fn len(&self) -> usize;

    /// Whether `log_pdf` is available.
    fn is_smooth(&self) -> bool;

    /// `(ln F(l), ln(1 - F(l)))` for `l >= 0`.
    fn ln_cdf_pair(&self, l: T) -> Result<(T, T)>;

    fn log_pdf(&self, l: T) -> Result<T>;

    /// Generalized inverse at lower-tail log-probability `ln p`.
    fn quantile_from_ln_lower(&self, ln_p: T) -> Result<T>;

    /// Generalized inverse at upper-tail log-probability `ln(1 - p)`.
    fn quantile_from_ln_upper(&self, ln_q: T) -> Result<T>;

    fn cdf(&self, l: T) -> Result<T> {
        let (lc, ls) = self.ln_cdf_pair(l)?;
        Ok(if lc < ls { lc.exp() } else { T::one() - ls.exp() })
    }

    fn quantile(&self, p: T) -> Result<T> {
        check_probability("CalibrationMap::quantile", p)?;
        if p <= T::c(0.5) {
            self.quantile_from_ln_lower(p.ln())
        } else {
            self.quantile_from_ln_upper((T::one() - p).ln())
        }
    }

    /// One norm drawn from the estimate; by default the quantile of an open
    /// uniform draw.
    fn sample_norm(&self, rng: &mut dyn rand::RngCore) -> Result<T> {
        self.quantile(open_unit(rng))
    }
}

pub(crate) fn check_norm<T: Real>(op: &'static str, l: T) -> Result<()> {
    if l.is_nan() || l < T::zero() {
        return Err(domain(op, format!("norm must be >= 0, got {l}")));
    }
    Ok(())
}

pub(crate) fn check_probability<T: Real>(op: &'static str, p: T) -> Result<()> {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return Err(domain(op, format!("probability must be in [0, 1], got {p}")));
    }
    Ok(())
}

pub(crate) fn check_norms<T: Real>(norms: &[T], min: usize) -> Result<()> {
    if norms.is_empty() {
        return Err(Error::Empty("no calibration norms".into()));
    }
    if norms.len() < min {
        return Err(Error::InsufficientData(format!(
            "{} calibration norms, need at least {min}",
            norms.len()
        )));
    }
    if let Some(v) = norms.iter().find(|v| !v.is_finite() || **v < T::zero()) {
        return Err(domain("fit", format!("calibration norms must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Pre-transform applied to norms before smooth estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    #[default]
    CubeRoot,
}

impl Transform {
    pub fn apply<T: Real>(self, l: T) -> T {
        match self {
            Transform::Identity => l,
            Transform::CubeRoot => l.cbrt(),
        }
    }

    pub fn invert<T: Real>(self, t: T) -> T {
        match self {
            Transform::Identity => t,
            Transform::CubeRoot => t * t * t,
        }
    }

    /// `ln g'(l)` written in terms of `t = g(l)`.
    pub fn ln_derivative<T: Real>(self, t: T) -> T {
        match self {
            Transform::Identity => T::zero(),
            Transform::CubeRoot => -(T::c(3.0).ln() + T::c(2.0) * t.ln()),
        }
    }
}

/// Smallest norm used by the smooth estimators; exact zeros are raised to it.
pub const NORM_FLOOR: f64 = 1e-12;

/// Any fitted map, in a form that can be persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case", bound = "T: Real")]
pub enum FittedMap<T: Real> {
    Empirical(EmpiricalCdfMap<T>),
    GammaKde(GammaKdeMap<T>),
    Spline(SplineMap<T>),
    Law(LawMap),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            FittedMap::Empirical($m) => $e,
            FittedMap::GammaKde($m) => $e,
            FittedMap::Spline($m) => $e,
            FittedMap::Law($m) => $e,
        }
    };
}

impl<T: Real> CalibrationMap<T> for FittedMap<T> {
    fn len(&self) -> usize {
        dispatch!(self, m => CalibrationMap::<T>::len(m))
    }
    fn is_smooth(&self) -> bool {
        dispatch!(self, m => CalibrationMap::<T>::is_smooth(m))
    }
    fn ln_cdf_pair(&self, l: T) -> Result<(T, T)> {
        dispatch!(self, m => m.ln_cdf_pair(l))
    }
    fn log_pdf(&self, l: T) -> Result<T> {
        dispatch!(self, m => m.log_pdf(l))
    }
    fn quantile_from_ln_lower(&self, ln_p: T) -> Result<T> {
        dispatch!(self, m => m.quantile_from_ln_lower(ln_p))
    }
    fn quantile_from_ln_upper(&self, ln_q: T) -> Result<T> {
        dispatch!(self, m => m.quantile_from_ln_upper(ln_q))
    }
    fn cdf(&self, l: T) -> Result<T> {
        dispatch!(self, m => m.cdf(l))
    }
    fn quantile(&self, p: T) -> Result<T> {
        dispatch!(self, m => m.quantile(p))
    }
    fn sample_norm(&self, rng: &mut dyn rand::RngCore) -> Result<T> {
        dispatch!(self, m => m.sample_norm(rng))
    }
}

/// Which estimator of `F_L` to fit, with its options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Empirical,
    GammaKde(KdeOptions),
    Spline(SplineOptions),
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::GammaKde(KdeOptions::default())
    }
}

impl Estimator {
    pub fn fit<T: Real>(&self, norms: &[T]) -> Result<FittedMap<T>> {
        Ok(match self {
            Estimator::Empirical => FittedMap::Empirical(EmpiricalCdfMap::fit(norms)?),
            Estimator::GammaKde(o) => FittedMap::GammaKde(GammaKdeMap::fit(norms, *o)?),
            Estimator::Spline(o) => FittedMap::Spline(SplineMap::fit(norms, *o)?),
        })
    }
}

impl<T: Real> FittedMap<T> {
    /// Largest finite value the map's quantile function takes.
    pub fn largest_finite_norm(&self) -> Option<T> {
        match self {
            FittedMap::Empirical(m) => m.sorted_norms().last().copied(),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FittedMap::Empirical(_) => "empirical",
            FittedMap::GammaKde(_) => "gamma_kde",
            FittedMap::Spline(_) => "spline",
            FittedMap::Law(_) => "law",
        }
    }
}

pub const MAP_FORMAT: &str = "latrec-calibration-map";
pub const MAP_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct Envelope<T: Real> {
    format: String,
    version: u32,
    map: FittedMap<T>,
}

/// Serializes a fitted map as versioned JSON.
pub fn to_json<T: Real>(map: &FittedMap<T>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Envelope {
        format: MAP_FORMAT.into(),
        version: MAP_FORMAT_VERSION,
        map: map.clone(),
    })?)
}

pub fn from_json<T: Real>(s: &str) -> Result<FittedMap<T>> {
    let env: Envelope<T> = serde_json::from_str(s)?;
    if env.format != MAP_FORMAT || env.version != MAP_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "expected {MAP_FORMAT} v{MAP_FORMAT_VERSION}, got {} v{}",
            env.format, env.version
        )));
    }
    Ok(env.map)
}
