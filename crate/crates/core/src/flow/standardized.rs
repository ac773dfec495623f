use std::sync::Arc;

use super::ConditionalFlow;
use crate::error::{Error, Result};
use crate::norm_laws::Latent;
use crate::scalar::Real;

/// Exposes a flow fitted on standardized columns in the original units.
///
/// `x` is standardized with `(x - x_mean) / x_sd` before reaching the inner
/// flow, and the inner response is mapped back by `y = y_mean + y_sd * y_std`.
#[derive(Clone)]
pub struct Standardized<T: Real> {
    inner: Arc<dyn ConditionalFlow<T>>,
    x_mean: Vec<T>,
    x_sd: Vec<T>,
    y_mean: Vec<T>,
    y_sd: Vec<T>,
    ln_y_sd: T,
}

impl<T: Real> Standardized<T> {
    pub fn new(inner: Arc<dyn ConditionalFlow<T>>, x_mean: Vec<T>, x_sd: Vec<T>, y_mean: Vec<T>, y_sd: Vec<T>) -> Result<Self> {
        if y_mean.len() != inner.dim() || y_sd.len() != inner.dim() || x_mean.len() != x_sd.len() {
            return Err(Error::Flow("standardization constants have the wrong length".into()));
        }
        if x_sd.iter().chain(&y_sd).any(|&s| !(s > T::zero() && s.is_finite())) {
            return Err(Error::Flow("standard deviations must be positive and finite".into()));
        }
        let ln_y_sd = y_sd.iter().map(|s| s.ln()).sum();
        Ok(Self {
            inner,
            x_mean,
            x_sd,
            y_mean,
            y_sd,
            ln_y_sd,
        })
    }

    fn scale_x(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.x_mean.iter().zip(&self.x_sd))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

impl<T: Real> ConditionalFlow<T> for Standardized<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn latent(&self) -> Latent {
        self.inner.latent()
    }

    fn forward(&self, z: &[T], x: &[T]) -> Result<Vec<T>> {
        let ys = self.inner.forward(z, &self.scale_x(x))?;
        Ok(ys
            .iter()
            .zip(self.y_mean.iter().zip(&self.y_sd))
            .map(|(&v, (&m, &s))| m + s * v)
            .collect())
    }

    fn inverse(&self, y: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        let ys: Vec<T> = y
            .iter()
            .zip(self.y_mean.iter().zip(&self.y_sd))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect();
        let (z, ild) = self.inner.inverse(&ys, &self.scale_x(x))?;
        Ok((z, ild - self.ln_y_sd))
    }

    fn id(&self) -> String {
        format!("standardized({})", self.inner.id())
    }
}
