//! Evaluation metrics: NLL, latent and HDR calibration errors, energy score,
//! bits per dimension, relative scores and reliability curves.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{derive_seed, stream};
use crate::scalar::{norm, Real};

fn check_unit<T: Real>(op: &'static str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Empty(format!("{op}: no values")));
    }
    if let Some(p) = v.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return Err(domain(op, format!("values must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn sorted<T: Real>(v: &[T]) -> Vec<T> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    s
}

/// Mean of `|U_(j) - j / (N + 1)|` over the order statistics.
fn uniformity_error<T: Real>(op: &'static str, values: &[T]) -> Result<T> {
    check_unit(op, values)?;
    let n1 = T::from_usize_lossy(values.len() + 1);
    let total: T = sorted(values)
        .into_iter()
        .enumerate()
        .map(|(j, u)| (u - T::from_usize_lossy(j + 1) / n1).abs())
        .sum();
    Ok(total / T::from_usize_lossy(values.len()))
}

/// Latent calibration error of latent PIT values.
pub fn l_ece<T: Real>(pits: &[T]) -> Result<T> {
    uniformity_error("l_ece", pits)
}

/// HDR calibration error of HPD pre-ranks.
pub fn hdr_ece<T: Real>(pre_ranks: &[T]) -> Result<T> {
    uniformity_error("hdr_ece", pre_ranks)
}

/// Average negative log-density.
pub fn nll_mean<T: Real>(log_densities: &[T]) -> Result<T> {
    if log_densities.is_empty() {
        return Err(Error::Empty("nll_mean: no log-densities".into()));
    }
    if log_densities.iter().any(|v| v.is_nan()) {
        return Err(domain("nll_mean", "NaN log-density"));
    }
    Ok(-log_densities.iter().copied().sum::<T>() / T::from_usize_lossy(log_densities.len()))
}

/// `(s - s_base) / |s_base|`.
pub fn relative_score<T: Real>(s: T, s_base: T) -> Result<T> {
    if s_base == T::zero() {
        return Err(domain("relative_score", "base score is zero"));
    }
    Ok((s - s_base) / s_base.abs())
}

/// Bits per dimension for data discretized to 256 levels and scaled to `[-1, 1]`.
pub fn bpd<T: Real>(nll: T, d: usize) -> Result<T> {
    if d == 0 {
        return Err(domain("bpd", "dimension must be >= 1"));
    }
    Ok((nll / T::from_usize_lossy(d) + T::c(128.0).ln()) / T::LN_2())
}

/// Energy score of one truth against two independent sample sets.
pub fn energy_score_point<T: Real>(truth: &[T], first: &[Vec<T>], second: &[Vec<T>]) -> Result<T> {
    if first.len() < 2 || second.len() != first.len() {
        return Err(domain("energy_score", "need two sample sets of equal size >= 2"));
    }
    let dist = |a: &[T], b: &[T]| norm(&a.iter().zip(b).map(|(u, v)| *u - *v).collect::<Vec<T>>());
    let k = T::from_usize_lossy(first.len());
    let to_truth: T = first.iter().map(|s| dist(s, truth)).sum::<T>() / k;
    let mut spread = T::zero();
    for a in first {
        for b in second {
            spread += dist(a, b);
        }
    }
    Ok(to_truth - spread / (T::c(2.0) * k * k))
}

/// Mean energy score over test points.
///
/// `sampler(i, seed, k)` must return `k` draws from the predictive
/// distribution of test point `i`; the two sample sets of each point use
/// independent seeds derived from `seed`.
pub fn energy_score<T, S>(truths: &[Vec<T>], mut sampler: S, k: usize, seed: u64) -> Result<T>
where
    T: Real,
    S: FnMut(usize, u64, usize) -> Result<Vec<Vec<T>>>,
{
    if truths.is_empty() {
        return Err(Error::Empty("energy_score: no test points".into()));
    }
    if k < 2 {
        return Err(domain("energy_score", "K must be >= 2"));
    }
    let mut total = T::zero();
    for (i, y) in truths.iter().enumerate() {
        let a = sampler(i, derive_seed(seed, &[i as u64, 1]), k)?;
        let b = sampler(i, derive_seed(seed, &[i as u64, 2]), k)?;
        total += energy_score_point(y, &a, &b)?;
    }
    Ok(total / T::from_usize_lossy(truths.len()))
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic<T: Real>(sample: &[T], mut cdf: impl FnMut(T) -> T) -> T {
    let n = T::from_usize_lossy(sample.len());
    sorted(sample)
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let f = cdf(v);
            (T::from_usize_lossy(i + 1) / n - f).max(f - T::from_usize_lossy(i) / n)
        })
        .fold(T::zero(), T::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> T {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (mut i, mut j, mut d) = (0, 0, T::zero());
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((T::from_usize_lossy(i) / na - T::from_usize_lossy(j) / nb).abs());
    }
    d
}

/// `n` equispaced points on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub alpha: f64,
    pub empirical: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub band_level: f64,
    pub points: Vec<ReliabilityPoint>,
}

impl ReliabilityCurve {
    /// Fraction of grid points whose empirical value lies inside the band.
    pub fn inside_fraction(&self) -> f64 {
        let inside = self
            .points
            .iter()
            .filter(|p| p.empirical >= p.band_lo && p.empirical <= p.band_hi)
            .count();
        inside as f64 / self.points.len().max(1) as f64
    }
}

fn empirical_cdf(sorted: &[f64], a: f64) -> f64 {
    sorted.partition_point(|&v| v <= a) as f64 / sorted.len() as f64
}

fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical CDF of `pits` on `grid`, with pointwise consistency bands from
/// `mc_draws` uniform samples of the same size.
pub fn reliability_curve<T: Real>(pits: &[T], grid: &[f64], band_level: f64, mc_draws: usize, seed: u64) -> Result<ReliabilityCurve> {
    check_unit("reliability_curve", pits)?;
    if grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(domain("reliability_curve", "grid must lie in [0, 1]"));
    }
    if !(band_level > 0.0 && band_level < 1.0) || mc_draws < 2 {
        return Err(domain("reliability_curve", "need band_level in (0, 1) and mc_draws >= 2"));
    }
    let obs = sorted(&pits.iter().map(|p| p.to_f64_lossy()).collect::<Vec<_>>());
    let n = obs.len();
    let mut rng = stream(derive_seed(seed, &[0xb4d5]));
    let mut sims: Vec<Vec<f64>> = vec![Vec::with_capacity(mc_draws); grid.len()];
    let mut u = vec![0.0; n];
    for _ in 0..mc_draws {
        u.iter_mut().for_each(|v| *v = rng.random::<f64>());
        u.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        for (s, &a) in sims.iter_mut().zip(grid) {
            s.push(empirical_cdf(&u, a));
        }
    }
    let (lo, hi) = ((1.0 - band_level) / 2.0, (1.0 + band_level) / 2.0);
    let points = grid
        .iter()
        .zip(sims)
        .map(|(&alpha, mut s)| {
            s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            ReliabilityPoint {
                alpha,
                empirical: empirical_cdf(&obs, alpha),
                band_lo: sample_quantile(&s, lo),
                band_hi: sample_quantile(&s, hi),
            }
        })
        .collect();
    Ok(ReliabilityCurve { band_level, points })
}

/// Scores of one method on a test set. Density-free methods leave the
/// density-based entries empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub nll: Option<f64>,
    pub l_ece: Option<f64>,
    pub hdr_ece: Option<f64>,
    pub energy_score: Option<f64>,
    pub bpd: Option<f64>,
    pub relative_nll: Option<f64>,
    pub relative_es: Option<f64>,
}

/// Per-method scores and reliability curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub methods: BTreeMap<String, MethodScores>,
    pub reliability: BTreeMap<String, ReliabilityCurve>,
}

impl MetricsReport {
    /// Fills relative NLL and ES of every method against `base`.
    pub fn fill_relative(&mut self, base: &str) -> Result<()> {
        let reference = self
            .methods
            .get(base)
            .cloned()
            .ok_or_else(|| domain("fill_relative", format!("no method named {base}")))?;
        for scores in self.methods.values_mut() {
            scores.relative_nll = match (scores.nll, reference.nll) {
                (Some(s), Some(b)) => Some(relative_score(s, b)?),
                _ => None,
            };
            scores.relative_es = match (scores.energy_score, reference.energy_score) {
                (Some(s), Some(b)) => Some(relative_score(s, b)?),
                _ => None,
            };
        }
        Ok(())
    }
}
