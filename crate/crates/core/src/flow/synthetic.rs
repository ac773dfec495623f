//! Synthetic regression tasks with a known conditional law.
//!
//! Covariates are `x ~ U(-1, 1)²` and `Y | x ~ N(μ(x), L(x) L(x)ᵀ)` in any
//! response dimension `d`. The paired base flow is either the truth itself or
//! a deliberately wrong version of it, so calibration oracles are analytic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AffineGaussianFlow;
use crate::rng::{derive_seed, standard_normal, stream};
use crate::scalar::Real;

pub const COVARIATES: usize = 2;

/// `(a, b, c)` in `μ_k(x) = a x₀ + b sin(π x₁) + c x₀ x₁`, cycled over `k`.
pub const MEAN_COEF: [[f64; 3]; 4] = [[1.0, 0.5, 0.25], [-0.5, 1.0, 0.5], [0.75, -0.25, 1.0], [0.25, 0.75, -0.5]];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    WellSpecified,
    /// Base covariance is the true one times `std_ratio²`.
    ScaleMisspecified {
        std_ratio: f64,
    },
    /// Base mean is off by `shift` along `L(x) 1 / √d`.
    MeanShift {
        shift: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub dim: usize,
}

fn true_mean<T: Real>(dim: usize, x: &[T]) -> Vec<T> {
    let (x0, x1) = (x[0].to_f64_lossy(), x[1].to_f64_lossy());
    (0..dim)
        .map(|k| {
            let [a, b, c] = MEAN_COEF[k % 4];
            T::c(a * x0 + b * (std::f64::consts::PI * x1).sin() + c * x0 * x1)
        })
        .collect()
}

fn true_scale<T: Real>(dim: usize, x: &[T]) -> Vec<T> {
    let (x0, x1) = (x[0].to_f64_lossy(), x[1].to_f64_lossy());
    let mut l = vec![T::zero(); dim * dim];
    for i in 0..dim {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        l[i * dim + i] = T::c(0.5 * (0.25 * sign * x0 + 0.1 * (std::f64::consts::PI * x1).cos()).exp());
        for j in 0..i {
            l[i * dim + j] = T::c(0.2 * x1 / (i - j) as f64);
        }
    }
    l
}

impl SyntheticTask {
    pub fn new(kind: TaskKind, dim: usize) -> Self {
        Self { kind, dim }
    }

    pub fn well_specified(dim: usize) -> Self {
        Self::new(TaskKind::WellSpecified, dim)
    }

    /// Base model standard deviation twice the true one.
    pub fn misspecified_scale(dim: usize) -> Self {
        Self::new(TaskKind::ScaleMisspecified { std_ratio: 2.0 }, dim)
    }

    pub fn mean_shift(dim: usize, shift: f64) -> Self {
        Self::new(TaskKind::MeanShift { shift }, dim)
    }

    /// The data-generating conditional law as a flow.
    pub fn truth<T: Real>(&self) -> AffineGaussianFlow<T> {
        let d = self.dim;
        AffineGaussianFlow::new(d, move |x: &[T]| true_mean(d, x), move |x: &[T]| true_scale(d, x)).named(format!("synthetic-truth-d{d}"))
    }

    /// The model to be recalibrated.
    pub fn base_flow<T: Real>(&self) -> AffineGaussianFlow<T> {
        let d = self.dim;
        match self.kind {
            TaskKind::WellSpecified => self.truth().named(format!("synthetic-base-d{d}")),
            TaskKind::ScaleMisspecified { std_ratio } => {
                let c = T::c(std_ratio);
                AffineGaussianFlow::new(
                    d,
                    move |x: &[T]| true_mean(d, x),
                    move |x: &[T]| true_scale(d, x).into_iter().map(|v| v * c).collect(),
                )
                .named(format!("synthetic-base-d{d}-scale{std_ratio}"))
            }
            TaskKind::MeanShift { shift } => {
                let step = T::c(shift / (d as f64).sqrt());
                AffineGaussianFlow::new(
                    d,
                    move |x: &[T]| {
                        let l = true_scale::<T>(d, x);
                        let mut m = true_mean::<T>(d, x);
                        for (i, mi) in m.iter_mut().enumerate() {
                            *mi += step * (0..=i).map(|j| l[i * d + j]).sum::<T>();
                        }
                        m
                    },
                    move |x: &[T]| true_scale(d, x),
                )
                .named(format!("synthetic-base-d{d}-shift{shift}"))
            }
        }
    }

    /// When the base latent norm is `χ_d / s` exactly, returns `s`.
    pub fn oracle_norm_scale(&self) -> Option<f64> {
        match self.kind {
            TaskKind::WellSpecified => Some(1.0),
            TaskKind::ScaleMisspecified { std_ratio } => Some(std_ratio),
            TaskKind::MeanShift { .. } => None,
        }
    }

    pub fn true_log_density<T: Real>(&self, x: &[T], y: &[T]) -> crate::Result<T> {
        super::base_log_density(&self.truth::<T>(), x, y)
    }

    /// `n` pairs `(x, y)` drawn from the task.
    pub fn sample<T: Real>(&self, n: usize, seed: u64) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let d = self.dim;
        let mut rng = stream(derive_seed(seed, &[0x7a5c]));
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<T> = (0..COVARIATES).map(|_| T::c(rng.random_range(-1.0..1.0))).collect();
            let mu = true_mean::<T>(d, &x);
            let l = true_scale::<T>(d, &x);
            let z: Vec<T> = (0..d).map(|_| standard_normal(&mut rng)).collect();
            let y = (0..d).map(|i| mu[i] + (0..=i).map(|j| l[i * d + j] * z[j]).sum::<T>()).collect();
            xs.push(x);
            ys.push(y);
        }
        (xs, ys)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{latent_norm, ConditionalFlow};
    use super::*;

    #[test]
    fn true_density_integrates_to_one() {
        for d in [1usize, 2] {
            let task = SyntheticTask::well_specified(d);
            let x = [0.3, -0.6];
            let n = if d == 1 { 4000 } else { 300 };
            let (lo, hi) = (-5.0, 5.0);
            let h = (hi - lo) / n as f64;
            let mut total = 0.0;
            if d == 1 {
                for i in 0..=n {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    total += w * task.true_log_density(&x, &[lo + i as f64 * h]).unwrap().exp();
                }
                total *= h;
            } else {
                for i in 0..=n {
                    for j in 0..=n {
                        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
                        let y = [lo + i as f64 * h, lo + j as f64 * h];
                        total += w * task.true_log_density(&x, &y).unwrap().exp();
                    }
                }
                total *= h * h;
            }
            assert!((total - 1.0).abs() < 1e-3, "d = {d}: {total}");
        }
    }

    #[test]
    fn misspecified_norms_shrink_by_the_ratio() {
        let truth = SyntheticTask::misspecified_scale(3);
        let (xs, ys) = truth.sample::<f64>(200, 5);
        let base = truth.base_flow::<f64>();
        let t = truth.truth::<f64>();
        for (x, y) in xs.iter().zip(&ys) {
            let lb = latent_norm(&base, x, y).unwrap();
            let lt = latent_norm(&t, x, y).unwrap();
            assert!((lb * 2.0 - lt).abs() < 1e-12 * (1.0 + lt));
        }
        assert_eq!(base.dim(), 3);
    }

    #[test]
    fn sampling_is_seeded() {
        let task = SyntheticTask::mean_shift(2, 1.0);
        assert_eq!(task.sample::<f64>(10, 1), task.sample::<f64>(10, 1));
        assert_ne!(task.sample::<f64>(10, 1), task.sample::<f64>(10, 2));
    }
}
