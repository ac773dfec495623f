use serde::{Deserialize, Serialize};

use super::{check_norm, check_norms, check_probability, CalibrationMap};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Step CDF of the calibration norms with an extra point at `+∞`.
///
/// `F(l) = #{L_i <= l} / (n + 1)`, so the CDF never reaches 1 on finite `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EmpiricalCdfMap<T: Real> {
    sorted: Vec<T>,
}

impl<T: Real> EmpiricalCdfMap<T> {
    pub fn fit(norms: &[T]) -> Result<Self> {
        check_norms(norms, 1)?;
        let mut sorted = norms.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(Self { sorted })
    }

    pub fn sorted_norms(&self) -> &[T] {
        &self.sorted
    }

    /// `#{L_i <= l}`.
    pub fn count_le(&self, l: T) -> usize {
        self.sorted.partition_point(|&v| v <= l)
    }

    fn denom(&self) -> T {
        T::from_usize_lossy(self.sorted.len() + 1)
    }

    /// Rank `⌈α(n + 1)⌉`, computed with the same division as the CDF so that
    /// `F(l) <= α` and `l <= L_(k)` agree whenever `α(n + 1)` is not an integer.
    pub fn rank(&self, alpha: T) -> usize {
        let n1 = self.sorted.len() + 1;
        let den = self.denom();
        let frac = |k: usize| T::from_usize_lossy(k) / den;
        let mut m = (alpha * den).floor().to_usize().unwrap_or(0).min(n1);
        while m > 0 && frac(m) > alpha {
            m -= 1;
        }
        while m < n1 && frac(m + 1) <= alpha {
            m += 1;
        }
        if frac(m) == alpha {
            m
        } else {
            m + 1
        }
    }

    /// `L_(k)` with `L_(0) = 0` and `L_(n+1) = +∞`.
    pub fn order_statistic(&self, k: usize) -> T {
        match k {
            0 => T::zero(),
            k if k > self.sorted.len() => T::infinity(),
            k => self.sorted[k - 1],
        }
    }
}

impl<T: Real> CalibrationMap<T> for EmpiricalCdfMap<T> {
    fn len(&self) -> usize {
        self.sorted.len()
    }

    fn is_smooth(&self) -> bool {
        false
    }

    fn ln_cdf_pair(&self, l: T) -> Result<(T, T)> {
        check_norm("EmpiricalCdfMap::cdf", l)?;
        let k = self.count_le(l);
        let n1 = self.sorted.len() + 1;
        let den = self.denom().ln();
        Ok((T::from_usize_lossy(k).ln() - den, T::from_usize_lossy(n1 - k).ln() - den))
    }

    fn cdf(&self, l: T) -> Result<T> {
        check_norm("EmpiricalCdfMap::cdf", l)?;
        Ok(T::from_usize_lossy(self.count_le(l)) / self.denom())
    }

    fn log_pdf(&self, _l: T) -> Result<T> {
        Err(Error::Unsupported("the empirical calibration map has no density".into()))
    }

    fn quantile(&self, p: T) -> Result<T> {
        check_probability("EmpiricalCdfMap::quantile", p)?;
        Ok(self.order_statistic(self.rank(p)))
    }

    fn quantile_from_ln_lower(&self, ln_p: T) -> Result<T> {
        self.quantile(ln_p.exp().min(T::one()))
    }

    fn quantile_from_ln_upper(&self, ln_q: T) -> Result<T> {
        self.quantile((T::one() - ln_q.exp()).max(T::zero()))
    }
}
