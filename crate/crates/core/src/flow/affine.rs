use std::fmt;
use std::sync::Arc;

use super::{check_finite, ConditionalFlow};
use crate::error::{Error, Result};
use crate::norm_laws::Latent;
use crate::scalar::Real;

type VecFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// `T(z; x) = μ(x) + L(x) z` with `L(x)` lower triangular, positive diagonal.
///
/// With a standard Gaussian latent this is the conditional normal
/// `N(μ(x), L Lᵀ)`. The scale function returns `L` in row-major order.
#[derive(Clone)]
pub struct AffineGaussianFlow<T: Real> {
    dim: usize,
    latent: Latent,
    mean: VecFn<T>,
    scale: VecFn<T>,
    name: String,
}

impl<T: Real> fmt::Debug for AffineGaussianFlow<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineGaussianFlow")
            .field("dim", &self.dim)
            .field("name", &self.name)
            .finish()
    }
}

impl<T: Real> AffineGaussianFlow<T> {
    pub fn new<M, S>(dim: usize, mean: M, scale: S) -> Self
    where
        M: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
        S: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        Self {
            dim,
            latent: Latent::gaussian(dim),
            mean: Arc::new(mean),
            scale: Arc::new(scale),
            name: format!("affine-gaussian-d{dim}"),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = vec![T::zero(); dim * dim];
        for i in 0..dim {
            l[i * dim + i] = T::one();
        }
        Self::constant(vec![T::zero(); dim], l).named(format!("identity-d{dim}"))
    }

    /// Covariate-free flow with fixed mean and Cholesky factor.
    pub fn constant(mean: Vec<T>, scale: Vec<T>) -> Self {
        let dim = mean.len();
        Self::new(dim, move |_| mean.clone(), move |_| scale.clone())
    }

    /// Mean `B [1, x]` with `B` a `d × (p + 1)` row-major matrix and a fixed scale.
    pub fn linear(coef: Vec<T>, p: usize, scale: Vec<T>) -> Self {
        let dim = coef.len() / (p + 1);
        Self::new(
            dim,
            move |x: &[T]| {
                (0..dim)
                    .map(|k| {
                        let row = &coef[k * (p + 1)..(k + 1) * (p + 1)];
                        row[0] + row[1..].iter().zip(x).map(|(&b, &v)| b * v).sum::<T>()
                    })
                    .collect()
            },
            move |_| scale.clone(),
        )
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_latent(mut self, latent: Latent) -> Self {
        self.latent = latent;
        self
    }

    pub fn mean_at(&self, x: &[T]) -> Vec<T> {
        (self.mean)(x)
    }

    /// Lower-triangular factor at `x`, row-major.
    pub fn scale_at(&self, x: &[T]) -> Result<Vec<T>> {
        let l = (self.scale)(x);
        let d = self.dim;
        if l.len() != d * d {
            return Err(Error::Flow(format!("scale has {} entries, expected {}", l.len(), d * d)));
        }
        for i in 0..d {
            let v = l[i * d + i];
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Flow(format!("scale diagonal {i} is {v}")));
            }
        }
        Ok(l)
    }

    fn ild(&self, l: &[T]) -> T {
        -(0..self.dim).map(|i| l[i * self.dim + i].ln()).sum::<T>()
    }

    fn check_dim(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Flow(format!("expected dimension {}, got {}", self.dim, v.len())));
        }
        Ok(())
    }
}

impl<T: Real> ConditionalFlow<T> for AffineGaussianFlow<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn latent(&self) -> Latent {
        self.latent
    }

    fn forward(&self, z: &[T], x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_with_log_det(z, x)?.0)
    }

    fn forward_with_log_det(&self, z: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        self.check_dim(z)?;
        let d = self.dim;
        let mu = self.mean_at(x);
        let l = self.scale_at(x)?;
        let y: Vec<T> = (0..d).map(|i| mu[i] + (0..=i).map(|j| l[i * d + j] * z[j]).sum::<T>()).collect();
        check_finite("forward output", &y)?;
        Ok((y, self.ild(&l)))
    }

    fn inverse(&self, y: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        self.check_dim(y)?;
        let d = self.dim;
        let mu = self.mean_at(x);
        let l = self.scale_at(x)?;
        let mut z = vec![T::zero(); d];
        for i in 0..d {
            let mut acc = y[i] - mu[i];
            for j in 0..i {
                acc -= l[i * d + j] * z[j];
            }
            z[i] = acc / l[i * d + i];
        }
        Ok((z, self.ild(&l)))
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}
