use serde::{Deserialize, Serialize};

use super::{check_norm, CalibrationMap};
use crate::error::Result;
use crate::norm_laws::NormLaw;
use crate::scalar::Real;

/// Known norm distribution `L = ρ / s` with `ρ` following a [`NormLaw`].
///
/// Not an estimator: used when `F_L` is available in closed form, e.g. for
/// synthetic tasks whose base model is a rescaled truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawMap {
    pub law: NormLaw,
    pub scale: f64,
}

impl LawMap {
    pub fn new(law: NormLaw, scale: f64) -> Self {
        Self { law, scale }
    }
}

impl<T: Real> CalibrationMap<T> for LawMap {
    fn len(&self) -> usize {
        0
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn ln_cdf_pair(&self, l: T) -> Result<(T, T)> {
        check_norm("LawMap::cdf", l)?;
        self.law.ln_cdf_pair(l * T::c(self.scale))
    }

    fn log_pdf(&self, l: T) -> Result<T> {
        let s = T::c(self.scale);
        Ok(self.law.log_pdf(l * s)? + s.ln())
    }

    fn quantile_from_ln_lower(&self, ln_p: T) -> Result<T> {
        Ok(self.law.quantile_from_ln_lower(ln_p) / T::c(self.scale))
    }

    fn quantile_from_ln_upper(&self, ln_q: T) -> Result<T> {
        Ok(self.law.quantile_from_ln_upper(ln_q) / T::c(self.scale))
    }
}
