use std::fmt;
use std::sync::Arc;

use super::ConditionalFlow;
use crate::error::{Error, Result};
use crate::norm_laws::Latent;
use crate::scalar::Real;
use crate::special::{norm_cdf, norm_log_pdf, norm_quantile};

type ScalarFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Univariate flow whose latent is the PIT `z = F̂(y | x)` of a conditional
/// normal `N(μ(x), σ(x)²)`, uniform on `[0, 1]` under the model.
#[derive(Clone)]
pub struct GaussianPitFlow<T: Real> {
    mean: ScalarFn<T>,
    sd: ScalarFn<T>,
}

impl<T: Real> fmt::Debug for GaussianPitFlow<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GaussianPitFlow")
    }
}

impl<T: Real> GaussianPitFlow<T> {
    pub fn new<M, S>(mean: M, sd: S) -> Self
    where
        M: Fn(&[T]) -> T + Send + Sync + 'static,
        S: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        Self {
            mean: Arc::new(mean),
            sd: Arc::new(sd),
        }
    }

    fn params(&self, x: &[T]) -> Result<(T, T)> {
        let (m, s) = ((self.mean)(x), (self.sd)(x));
        if !(s > T::zero() && s.is_finite() && m.is_finite()) {
            return Err(Error::Flow(format!("invalid normal parameters ({m}, {s})")));
        }
        Ok((m, s))
    }

    /// Base predictive CDF `F̂(y | x)`.
    pub fn cdf(&self, x: &[T], y: T) -> Result<T> {
        let (m, s) = self.params(x)?;
        Ok(norm_cdf((y - m) / s))
    }
}

impl<T: Real> ConditionalFlow<T> for GaussianPitFlow<T> {
    fn dim(&self) -> usize {
        1
    }

    fn latent(&self) -> Latent {
        Latent::unit_interval()
    }

    fn forward(&self, z: &[T], x: &[T]) -> Result<Vec<T>> {
        let (m, s) = self.params(x)?;
        if !(z[0] >= T::zero() && z[0] <= T::one()) {
            return Err(Error::Flow(format!("latent {} outside [0, 1]", z[0])));
        }
        Ok(vec![m + s * norm_quantile(z[0])])
    }

    fn inverse(&self, y: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        let (m, s) = self.params(x)?;
        let t = (y[0] - m) / s;
        Ok((vec![norm_cdf(t)], norm_log_pdf(t) - s.ln()))
    }

    fn id(&self) -> String {
        "gaussian-pit".into()
    }
}
