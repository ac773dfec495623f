//! Laws of the latent norm `‖Z‖` for the standard latent distributions.
//!
//! A standard Gaussian latent in `d` dimensions has a Chi(d) norm; a latent
//! uniform on the unit ball has a Beta(d, 1) norm. Both are evaluated through
//! `(ln F, ln(1 - F))` pairs so that very high dimensional latents, whose
//! norm concentrates in a narrow shell, keep resolution in both tails.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::{open_unit, standard_normal};
use crate::scalar::{norm, Real};
use crate::special::{ln1mexp, ln_gamma, ln_gamma_pq, norm_quantile_from_ln_lower, solve_increasing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFamily {
    /// `‖Z‖` for `Z ~ N(0, I_d)`.
    ChiOfStandardGaussian,
    /// `‖Z‖` for `Z` uniform on the unit ball of `R^d`.
    BetaOfUniformBall,
}

/// Distribution of the latent norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormLaw {
    family: NormFamily,
    dim: usize,
}

fn check_norm<T: Real>(op: &'static str, l: T) -> Result<()> {
    if l.is_nan() || l < T::zero() {
        return Err(domain(op, format!("latent norm must be >= 0, got {l}")));
    }
    Ok(())
}

impl NormLaw {
    pub fn new(family: NormFamily, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(domain("NormLaw::new", "dimension must be >= 1"));
        }
        Ok(Self { family, dim })
    }

    pub fn chi(dim: usize) -> Result<Self> {
        Self::new(NormFamily::ChiOfStandardGaussian, dim)
    }

    pub fn beta(dim: usize) -> Result<Self> {
        Self::new(NormFamily::BetaOfUniformBall, dim)
    }

    pub fn family(&self) -> NormFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn half_dim<T: Real>(&self) -> T {
        T::from_usize_lossy(self.dim) * T::c(0.5)
    }

    /// `(ln F(l), ln(1 - F(l)))`.
    pub fn ln_cdf_pair<T: Real>(&self, l: T) -> Result<(T, T)> {
        check_norm("NormLaw::cdf", l)?;
        Ok(match self.family {
            NormFamily::ChiOfStandardGaussian => ln_gamma_pq(self.half_dim(), T::c(0.5) * l * l),
            NormFamily::BetaOfUniformBall => {
                if l >= T::one() {
                    (T::zero(), T::neg_infinity())
                } else {
                    let lc = T::from_usize_lossy(self.dim) * l.ln();
                    (lc, ln1mexp(lc))
                }
            }
        })
    }

    pub fn cdf<T: Real>(&self, l: T) -> Result<T> {
        let (lc, ls) = self.ln_cdf_pair(l)?;
        // the smaller tail carries the precision
        Ok(if lc < ls { lc.exp() } else { T::one() - ls.exp() })
    }

    pub fn log_cdf<T: Real>(&self, l: T) -> Result<T> {
        Ok(self.ln_cdf_pair(l)?.0)
    }

    pub fn log_survival<T: Real>(&self, l: T) -> Result<T> {
        Ok(self.ln_cdf_pair(l)?.1)
    }

    /// Log-density of the norm.
    ///
    /// Outside the support (and at a Chi boundary with `d > 1`) this is `-inf`
    /// rather than an error; only negative or NaN arguments are rejected for Chi.
    pub fn log_pdf<T: Real>(&self, l: T) -> Result<T> {
        if l.is_nan() {
            return Err(domain("NormLaw::log_pdf", "NaN norm"));
        }
        let d = T::from_usize_lossy(self.dim);
        match self.family {
            NormFamily::ChiOfStandardGaussian => {
                if l < T::zero() {
                    return Err(domain("NormLaw::log_pdf", format!("Chi density needs l >= 0, got {l}")));
                }
                if l == T::zero() {
                    return Ok(if self.dim == 1 {
                        T::LN_2() - T::c(0.918_938_533_204_672_8)
                    } else {
                        T::neg_infinity()
                    });
                }
                if l.is_infinite() {
                    return Ok(T::neg_infinity());
                }
                let half = self.half_dim::<T>();
                Ok((T::one() - half) * T::LN_2() - ln_gamma(half) + (d - T::one()) * l.ln() - T::c(0.5) * l * l)
            }
            NormFamily::BetaOfUniformBall => {
                if l <= T::zero() || l > T::one() {
                    return Ok(T::neg_infinity());
                }
                Ok(d.ln() + (d - T::one()) * l.ln())
            }
        }
    }

    pub fn quantile<T: Real>(&self, p: T) -> Result<T> {
        if p.is_nan() || p < T::zero() || p > T::one() {
            return Err(domain("NormLaw::quantile", format!("probability must be in [0,1], got {p}")));
        }
        if p <= T::c(0.5) {
            Ok(self.quantile_from_ln_lower(p.ln()))
        } else {
            Ok(self.quantile_from_ln_upper((T::one() - p).ln()))
        }
    }

    /// Quantile at lower-tail log-probability `ln p`.
    pub fn quantile_from_ln_lower<T: Real>(&self, ln_p: T) -> T {
        if ln_p == T::neg_infinity() {
            return T::zero();
        }
        if ln_p >= T::zero() {
            return self.upper_end();
        }
        match self.family {
            NormFamily::BetaOfUniformBall => (ln_p / T::from_usize_lossy(self.dim)).exp(),
            NormFamily::ChiOfStandardGaussian => {
                let start = self.chi_start(ln_p, false);
                let tol = T::c(1e-14).max(T::tolerance());
                solve_increasing(
                    |l| match self.ln_cdf_pair(l) {
                        Ok((lc, _)) => {
                            let slope = (self.log_pdf(l).unwrap_or(T::neg_infinity()) - lc).exp();
                            (lc - ln_p, slope)
                        }
                        Err(_) => (T::nan(), T::nan()),
                    },
                    T::zero(),
                    T::infinity(),
                    start,
                    tol,
                )
            }
        }
    }

    /// Quantile at upper-tail log-probability `ln(1 - p)`.
    pub fn quantile_from_ln_upper<T: Real>(&self, ln_q: T) -> T {
        if ln_q == T::neg_infinity() {
            return self.upper_end();
        }
        if ln_q >= T::zero() {
            return T::zero();
        }
        match self.family {
            NormFamily::BetaOfUniformBall => (ln1mexp(ln_q) / T::from_usize_lossy(self.dim)).exp(),
            NormFamily::ChiOfStandardGaussian => {
                let start = self.chi_start(ln_q, true);
                let tol = T::c(1e-14).max(T::tolerance());
                solve_increasing(
                    |l| match self.ln_cdf_pair(l) {
                        Ok((_, ls)) => {
                            let slope = (self.log_pdf(l).unwrap_or(T::neg_infinity()) - ls).exp();
                            (ln_q - ls, slope)
                        }
                        Err(_) => (T::nan(), T::nan()),
                    },
                    T::zero(),
                    T::infinity(),
                    start,
                    tol,
                )
            }
        }
    }

    fn upper_end<T: Real>(&self) -> T {
        match self.family {
            NormFamily::ChiOfStandardGaussian => T::infinity(),
            NormFamily::BetaOfUniformBall => T::one(),
        }
    }

    /// Wilson–Hilferty starting point for the Chi quantile.
    fn chi_start<T: Real>(&self, ln_tail: T, upper: bool) -> T {
        let k = self.dim as f64;
        let lt = ln_tail.to_f64_lossy();
        let z = if lt < 0.5f64.ln() {
            let z: f64 = norm_quantile_from_ln_lower(lt);
            if upper {
                -z
            } else {
                z
            }
        } else {
            0.0
        };
        let c = 2.0 / (9.0 * k);
        let cube = 1.0 - c + z * c.sqrt();
        let x = if cube > 0.0 {
            k * cube * cube * cube
        } else {
            // lower tail: P(a, x) ≈ x^a / Γ(a + 1)
            let a = 0.5 * k;
            (2.0 * ((lt + ln_gamma(a + 1.0)) / a).exp()).max(1e-300) * 0.5
        };
        T::c((x.max(0.0)).sqrt().max(1e-300))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    StandardGaussian,
    UniformBall,
    /// One-dimensional latent uniform on `[0, 1]` with `ρ(z) = z`; the latent
    /// of a univariate PIT, under which latent recalibration coincides with
    /// quantile recalibration.
    UnitInterval,
}

/// Base distribution of a flow's latent variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latent {
    pub kind: LatentKind,
    pub dim: usize,
}

impl Latent {
    pub fn gaussian(dim: usize) -> Self {
        Self {
            kind: LatentKind::StandardGaussian,
            dim,
        }
    }

    pub fn uniform_ball(dim: usize) -> Self {
        Self {
            kind: LatentKind::UniformBall,
            dim,
        }
    }

    pub fn unit_interval() -> Self {
        Self {
            kind: LatentKind::UnitInterval,
            dim: 1,
        }
    }

    pub fn norm_law(&self) -> NormLaw {
        let dim = self.dim.max(1);
        match self.kind {
            LatentKind::StandardGaussian => NormLaw {
                family: NormFamily::ChiOfStandardGaussian,
                dim,
            },
            LatentKind::UniformBall => NormLaw {
                family: NormFamily::BetaOfUniformBall,
                dim,
            },
            LatentKind::UnitInterval => NormLaw {
                family: NormFamily::BetaOfUniformBall,
                dim: 1,
            },
        }
    }

    /// `ln f_Z(z)`.
    pub fn log_density<T: Real>(&self, z: &[T]) -> T {
        let d = T::from_usize_lossy(self.dim);
        match self.kind {
            LatentKind::StandardGaussian => {
                let sq: T = z.iter().map(|&v| v * v).sum();
                -T::c(0.5) * sq - d * T::c(0.918_938_533_204_672_8)
            }
            LatentKind::UniformBall => {
                if norm(z) <= T::one() {
                    // ln V_d = (d/2) ln π - ln Γ(d/2 + 1)
                    -(T::c(0.5) * d * T::PI().ln() - ln_gamma(T::c(0.5) * d + T::one()))
                } else {
                    T::neg_infinity()
                }
            }
            LatentKind::UnitInterval => {
                if z[0] >= T::zero() && z[0] <= T::one() {
                    T::zero()
                } else {
                    T::neg_infinity()
                }
            }
        }
    }

    /// Log of the (d-1)-dimensional measure of the set of directions.
    ///
    /// A radially symmetric latent with norm density `g` has density
    /// `g(‖z‖) / (A ‖z‖^{d-1})` where `A` is this area.
    pub fn ln_direction_area<T: Real>(&self) -> T {
        match self.kind {
            LatentKind::UnitInterval => T::zero(),
            _ => {
                let half = T::c(0.5) * T::from_usize_lossy(self.dim);
                T::LN_2() + half * T::PI().ln() - ln_gamma(half)
            }
        }
    }

    /// Uniformly distributed direction (a unit vector).
    pub fn sample_direction<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        match self.kind {
            LatentKind::UnitInterval => vec![T::one()],
            _ => loop {
                let v: Vec<T> = (0..self.dim).map(|_| standard_normal(rng)).collect();
                let n = norm(&v);
                if n > T::zero() {
                    return v.into_iter().map(|x| x / n).collect();
                }
            },
        }
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        match self.kind {
            LatentKind::StandardGaussian => (0..self.dim).map(|_| standard_normal(rng)).collect(),
            LatentKind::UniformBall => {
                let dir = self.sample_direction::<T, _>(rng);
                let u: T = open_unit(rng);
                let radius = u.powf(T::from_usize_lossy(self.dim).recip());
                dir.into_iter().map(|x| x * radius).collect()
            }
            LatentKind::UnitInterval => vec![open_unit(rng)],
        }
    }
}
