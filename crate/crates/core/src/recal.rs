//! Latent recalibration.
//!
//! A [`RadialRecalibrator`] rescales latent vectors radially so that the norm
//! of the new latent `Z' = R(Z)` follows `F̂_L`, the estimated law of latent
//! norms on calibration data:
//!
//! ```text
//! r(l)   = F̂_L^{-1}(F_ρ(l))           R(z) = r(‖z‖) z / ‖z‖
//! r⁻¹(l) = F_ρ^{-1}(F̂_L(l))           ln |det ∇R(z)| = (d-1)(ln r(l) - ln l) + ln r'(l)
//! ```
//!
//! where `F_ρ` is the law of `‖Z‖` under the flow's latent distribution. The
//! recalibrated model is `y = T(R(z); x)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationMap, Estimator, FittedMap};
use crate::error::{domain, Error, Result};
use crate::flow::{check_finite, latent_norm, ConditionalFlow};
use crate::norm_laws::{Latent, NormLaw};
use crate::rng::{derive_seed, stream};
use crate::scalar::{norm, Real};

/// Below this norm, `R` uses the slope `r(l) / l` taken at this norm.
pub const SMALL_NORM: f64 = 1e-8;

pub const RECALIBRATOR_FORMAT: &str = "latrec-recalibrator";
pub const RECALIBRATOR_FORMAT_VERSION: u32 = 1;

/// Latent norms `‖T^{-1}(y_i; x_i)‖` of calibration pairs.
pub fn calibration_norms<T: Real>(flow: &dyn ConditionalFlow<T>, xs: &[Vec<T>], ys: &[Vec<T>]) -> Result<Vec<T>> {
    if xs.len() != ys.len() {
        return Err(domain(
            "calibration_norms",
            format!("{} covariate rows but {} responses", xs.len(), ys.len()),
        ));
    }
    xs.iter().zip(ys).map(|(x, y)| latent_norm(flow, x, y)).collect()
}

/// A flow together with a radial recalibration of its latent space.
#[derive(Clone)]
pub struct RadialRecalibrator<T: Real> {
    law: NormLaw,
    latent: Latent,
    map: FittedMap<T>,
    flow: Arc<dyn ConditionalFlow<T>>,
}

impl<T: Real> std::fmt::Debug for RadialRecalibrator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialRecalibrator")
            .field("flow", &self.flow.id())
            .field("law", &self.law)
            .field("map", &self.map.name())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct Record<T: Real> {
    format: String,
    version: u32,
    flow: String,
    latent: Latent,
    map: FittedMap<T>,
}

impl<T: Real> RadialRecalibrator<T> {
    pub fn new(flow: Arc<dyn ConditionalFlow<T>>, map: FittedMap<T>) -> Self {
        let latent = flow.latent();
        Self {
            law: latent.norm_law(),
            latent,
            map,
            flow,
        }
    }

    /// Fits `F̂_L` on the latent norms of calibration pairs.
    pub fn fit(flow: Arc<dyn ConditionalFlow<T>>, xs: &[Vec<T>], ys: &[Vec<T>], estimator: &Estimator) -> Result<Self> {
        let norms = calibration_norms(flow.as_ref(), xs, ys)?;
        let map = estimator.fit(&norms)?;
        Ok(Self::new(flow, map))
    }

    pub fn norm_law(&self) -> NormLaw {
        self.law
    }

    pub fn map(&self) -> &FittedMap<T> {
        &self.map
    }

    pub fn flow(&self) -> &Arc<dyn ConditionalFlow<T>> {
        &self.flow
    }

    pub fn dim(&self) -> usize {
        self.latent.dim
    }

    fn require_smooth(&self, op: &str) -> Result<()> {
        if self.map.is_smooth() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{op} needs a smooth calibration map, got {}",
                self.map.name()
            )))
        }
    }

    /// `r(l) = F̂_L^{-1}(F_ρ(l))`; `+∞` when an empirical map is asked beyond
    /// its largest calibration norm.
    pub fn r(&self, l: T) -> Result<T> {
        let (lf, ls) = self.law.ln_cdf_pair(l)?;
        if lf < T::c(0.5).ln() {
            self.map.quantile_from_ln_lower(lf)
        } else {
            self.map.quantile_from_ln_upper(ls)
        }
    }

    /// `r^{-1}(l) = F_ρ^{-1}(F̂_L(l))`.
    pub fn r_inverse(&self, l: T) -> Result<T> {
        let (lf, ls) = self.map.ln_cdf_pair(l)?;
        Ok(if lf < T::c(0.5).ln() {
            self.law.quantile_from_ln_lower(lf)
        } else {
            self.law.quantile_from_ln_upper(ls)
        })
    }

    /// `ln r'(l) = ln f_ρ(l) - ln f̂_L(r(l))`.
    pub fn ln_r_prime(&self, l: T) -> Result<T> {
        self.require_smooth("r_prime")?;
        if !(l > T::zero()) {
            return Err(domain("r_prime", format!("norm must be > 0, got {l}")));
        }
        Ok(self.law.log_pdf(l)? - self.map.log_pdf(self.r(l)?)?)
    }

    pub fn r_prime(&self, l: T) -> Result<T> {
        Ok(self.ln_r_prime(l)?.exp())
    }

    /// `r(l) / l`, with the slope at [`SMALL_NORM`] used below it.
    fn ratio(&self, l: T) -> Result<T> {
        let l = l.max(T::c(SMALL_NORM));
        let r = self.r(l)?;
        if r == T::zero() {
            return Ok(T::zero());
        }
        Ok((r.ln() - l.ln()).exp())
    }

    /// `R(z)`. Entries are infinite when `r(‖z‖)` is.
    pub fn radial_map(&self, z: &[T]) -> Result<Vec<T>> {
        check_finite("latent", z)?;
        let l = norm(z);
        if l == T::zero() {
            return Ok(vec![T::zero(); z.len()]);
        }
        let k = self.ratio(l)?;
        Ok(z.iter().map(|&v| if k.is_infinite() { v.signum() * k } else { v * k }).collect())
    }

    /// `R^{-1}(z')`.
    pub fn radial_map_inverse(&self, zp: &[T]) -> Result<Vec<T>> {
        check_finite("latent", zp)?;
        let lp = norm(zp);
        if lp == T::zero() {
            return Ok(vec![T::zero(); zp.len()]);
        }
        let l = self.r_inverse(lp)?;
        let k = (l.ln() - lp.ln()).exp();
        Ok(zp.iter().map(|&v| v * k).collect())
    }

    /// `ln |det ∇R(z)|`.
    pub fn log_det_jacobian_r(&self, z: &[T]) -> Result<T> {
        self.require_smooth("log_det_jacobian_r")?;
        check_finite("latent", z)?;
        let l = norm(z);
        if l == T::zero() {
            return Err(domain("log_det_jacobian_r", "undefined at z = 0"));
        }
        let d1 = T::from_usize_lossy(self.dim().saturating_sub(1));
        let spread = if d1 == T::zero() {
            T::zero()
        } else {
            d1 * (self.r(l)?.ln() - l.ln())
        };
        Ok(spread + self.ln_r_prime(l)?)
    }

    /// `ln f_{Z'}(z')`: norm density `f̂_L` spread uniformly over directions.
    /// At the origin the value at norm [`SMALL_NORM`] is returned.
    pub fn recalibrated_latent_log_density(&self, zp: &[T]) -> Result<T> {
        self.require_smooth("recalibrated density")?;
        check_finite("latent", zp)?;
        let mut lp = norm(zp);
        if lp == T::zero() && self.dim() > 1 {
            lp = T::c(SMALL_NORM);
        }
        let d1 = T::from_usize_lossy(self.dim().saturating_sub(1));
        let spread = if d1 == T::zero() { T::zero() } else { d1 * lp.ln() };
        let v = self.map.log_pdf(lp)? - self.latent.ln_direction_area::<T>() - spread;
        if v.is_nan() {
            return Err(domain("recalibrated density", "undefined at the latent origin"));
        }
        Ok(v)
    }

    /// Log-density of the recalibrated model, `ln f_{Z'}(T^{-1}(y; x)) + ln |det ∇T^{-1}|`.
    pub fn recalibrated_log_density(&self, x: &[T], y: &[T]) -> Result<T> {
        self.require_smooth("recalibrated_log_density")?;
        let (zp, ild) = self.inverse(x, y)?;
        Ok(self.recalibrated_latent_log_density(&zp)? + ild)
    }

    /// Same density through the change of variables of `R`:
    /// `ln f_Z(R^{-1}(z')) - ln |det ∇R(R^{-1}(z'))| + ln |det ∇T^{-1}|`.
    pub fn recalibrated_log_density_via_jacobian(&self, x: &[T], y: &[T]) -> Result<T> {
        self.require_smooth("recalibrated_log_density")?;
        let (zp, ild) = self.inverse(x, y)?;
        let z = self.radial_map_inverse(&zp)?;
        Ok(self.latent.log_density(&z) - self.log_det_jacobian_r(&z)? + ild)
    }

    fn inverse(&self, x: &[T], y: &[T]) -> Result<(Vec<T>, T)> {
        check_finite("response", y)?;
        let (z, ild) = self.flow.inverse(y, x)?;
        check_finite("latent", &z)?;
        Ok((z, ild))
    }

    /// `r` for drawing samples: an empirical map's atom at `+∞` is replaced
    /// by its largest calibration norm.
    fn r_for_sampling(&self, l: T) -> Result<T> {
        let r = self.r(l)?;
        Ok(match self.map.largest_finite_norm() {
            Some(top) if r.is_infinite() => top,
            _ => r,
        })
    }

    /// `count` draws `T(R(z); x)` with `z` from the latent law.
    pub fn sample_recalibrated(&self, x: &[T], count: usize, seed: u64) -> Result<Vec<Vec<T>>> {
        check_count(count)?;
        let mut rng = stream(derive_seed(seed, &[0x4c52, 1]));
        (0..count)
            .map(|_| {
                let z = self.latent.sample::<T, _>(&mut rng);
                let l = norm(&z);
                let zp = if l == T::zero() {
                    z
                } else {
                    let k = (self.r_for_sampling(l.max(T::c(SMALL_NORM)))?.ln() - l.max(T::c(SMALL_NORM)).ln()).exp();
                    z.into_iter().map(|v| v * k).collect()
                };
                self.flow.forward(&zp, x)
            })
            .collect()
    }

    fn direct_latent<R: rand::Rng>(&self, rng: &mut R) -> Result<Vec<T>> {
        let mut l = self.map.sample_norm(rng)?;
        if l.is_infinite() {
            l = self.map.largest_finite_norm().unwrap_or(l);
        }
        let dir = self.latent.sample_direction::<T, _>(rng);
        Ok(dir.into_iter().map(|v| v * l).collect())
    }

    /// `count` draws from the recalibrated model built directly from a norm
    /// `F̂_L^{-1}(U)` and a uniform direction; same law as
    /// [`Self::sample_recalibrated`].
    pub fn sample_direct(&self, x: &[T], count: usize, seed: u64) -> Result<Vec<Vec<T>>> {
        check_count(count)?;
        let mut rng = stream(derive_seed(seed, &[0x4c52, 2]));
        (0..count).map(|_| self.flow.forward(&self.direct_latent(&mut rng)?, x)).collect()
    }

    /// Draws as in [`Self::sample_direct`], each with its recalibrated log-density.
    pub fn sample_direct_with_log_density(&self, x: &[T], count: usize, seed: u64) -> Result<Vec<(Vec<T>, T)>> {
        check_count(count)?;
        self.require_smooth("sample_direct_with_log_density")?;
        let mut rng = stream(derive_seed(seed, &[0x4c52, 2]));
        (0..count)
            .map(|_| {
                let zp = self.direct_latent(&mut rng)?;
                let (y, ild) = self.flow.forward_with_log_det(&zp, x)?;
                Ok((y, self.recalibrated_latent_log_density(&zp)? + ild))
            })
            .collect()
    }

    /// `F̂_L(‖T^{-1}(y; x)‖)`, the latent PIT of the recalibrated model.
    pub fn latent_pit(&self, x: &[T], y: &[T]) -> Result<T> {
        self.map.cdf(latent_norm(self.flow.as_ref(), x, y)?)
    }

    /// Latent norm bound of the level-`α` region. For an empirical map this is
    /// the order statistic `L_(⌈α(n+1)⌉)` (`+∞` past `L_(n)`); for a smooth
    /// map it is `F̂_L^{-1}(α)`.
    pub fn conformal_threshold(&self, alpha: T) -> Result<T> {
        check_level(alpha)?;
        match &self.map {
            FittedMap::Empirical(m) => Ok(m.order_statistic(m.rank(alpha))),
            m => m.quantile(alpha),
        }
    }

    /// Whether `y` lies in the level-`α` region at `x`. Empirical map:
    /// `‖T^{-1}(y; x)‖ <= L_(⌈α(n+1)⌉)`. Smooth map: `latent_pit <= α`.
    pub fn conformal_contains(&self, x: &[T], y: &[T], alpha: T) -> Result<bool> {
        check_level(alpha)?;
        let l = latent_norm(self.flow.as_ref(), x, y)?;
        match &self.map {
            FittedMap::Empirical(_) => Ok(l <= self.conformal_threshold(alpha)?),
            m => Ok(m.cdf(l)? <= alpha),
        }
    }

    /// Versioned JSON holding the calibration map and the flow identifier.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Record {
            format: RECALIBRATOR_FORMAT.into(),
            version: RECALIBRATOR_FORMAT_VERSION,
            flow: self.flow.id(),
            latent: self.latent,
            map: self.map.clone(),
        })?)
    }

    /// Restores a recalibrator; `flow` must carry the identifier and latent
    /// law it was saved with.
    pub fn from_json(s: &str, flow: Arc<dyn ConditionalFlow<T>>) -> Result<Self> {
        let rec: Record<T> = serde_json::from_str(s)?;
        if rec.format != RECALIBRATOR_FORMAT || rec.version != RECALIBRATOR_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {RECALIBRATOR_FORMAT} v{RECALIBRATOR_FORMAT_VERSION}, got {} v{}",
                rec.format, rec.version
            )));
        }
        if rec.flow != flow.id() || rec.latent != flow.latent() {
            return Err(Error::Format(format!(
                "recalibrator was fitted for flow {:?}, got {:?}",
                rec.flow,
                flow.id()
            )));
        }
        Ok(Self::new(flow, rec.map))
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::Empty("sample count must be >= 1".into()));
    }
    Ok(())
}

fn check_level<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(domain("conformal", format!("α must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}
