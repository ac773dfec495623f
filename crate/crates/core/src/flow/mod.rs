//! Conditional normalizing flows `y = T(z; x)` and helpers built on them.

mod affine;
mod external;
mod pit;
mod standardized;
pub mod synthetic;

pub use affine::AffineGaussianFlow;
pub use external::{SubprocessFlow, TabulatedFlow};
pub use pit::GaussianPitFlow;
pub use standardized::Standardized;

use crate::error::{Error, Result};
use crate::norm_laws::Latent;
use crate::rng::{derive_seed, stream};
use crate::scalar::{all_finite, norm, Real};

/// An invertible map from latent `z` to response `y`, conditioned on `x`.
pub trait ConditionalFlow<T: Real>: Send + Sync {
    /// Dimension of `y` and `z`.
    fn dim(&self) -> usize;

    fn latent(&self) -> Latent;

    fn forward(&self, z: &[T], x: &[T]) -> Result<Vec<T>>;

    /// `T^{-1}(y; x)` together with `ln |det ∇_y T^{-1}(y; x)|`.
    fn inverse(&self, y: &[T], x: &[T]) -> Result<(Vec<T>, T)>;

    /// Forward pass that also returns the inverse log-determinant at the output.
    fn forward_with_log_det(&self, z: &[T], x: &[T]) -> Result<(Vec<T>, T)> {
        let y = self.forward(z, x)?;
        let (_, ild) = self.inverse(&y, x)?;
        Ok((y, ild))
    }

    /// Identifier used when persisting recalibrators.
    fn id(&self) -> String;
}

pub(crate) fn check_finite<T: Real>(what: &str, v: &[T]) -> Result<()> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(Error::Flow(format!("non-finite {what}")))
    }
}

fn checked_inverse<T: Real, F: ConditionalFlow<T> + ?Sized>(flow: &F, x: &[T], y: &[T]) -> Result<(Vec<T>, T)> {
    check_finite("response", y)?;
    let (z, ild) = flow.inverse(y, x)?;
    check_finite("latent", &z)?;
    if !ild.is_finite() {
        return Err(Error::Flow("non-finite inverse log-determinant".into()));
    }
    Ok((z, ild))
}

/// `ρ(T^{-1}(y; x))`, the Euclidean norm of the recovered latent.
pub fn latent_norm<T: Real, F: ConditionalFlow<T> + ?Sized>(flow: &F, x: &[T], y: &[T]) -> Result<T> {
    let (z, _) = checked_inverse(flow, x, y)?;
    Ok(norm(&z))
}

/// Change-of-variables log-density of the base model.
pub fn base_log_density<T: Real, F: ConditionalFlow<T> + ?Sized>(flow: &F, x: &[T], y: &[T]) -> Result<T> {
    let (z, ild) = checked_inverse(flow, x, y)?;
    Ok(flow.latent().log_density(&z) + ild)
}

/// `count` draws from the base predictive distribution at `x`.
pub fn sample_base<T: Real, F: ConditionalFlow<T> + ?Sized>(flow: &F, x: &[T], count: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if count == 0 {
        return Err(Error::Empty("sample count must be >= 1".into()));
    }
    let latent = flow.latent();
    let mut rng = stream(derive_seed(seed, &[0x5a4d]));
    (0..count)
        .map(|_| {
            let z = latent.sample::<T, _>(&mut rng);
            flow.forward(&z, x)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// `ln |det J|` of `T^{-1}` by central differences, via LU with partial pivoting.
    pub fn fd_inverse_log_det<F: ConditionalFlow<f64> + ?Sized>(flow: &F, x: &[f64], y: &[f64], h: f64) -> f64 {
        let d = y.len();
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[j] += h;
            ym[j] -= h;
            let (zp, _) = flow.inverse(&yp, x).unwrap();
            let (zm, _) = flow.inverse(&ym, x).unwrap();
            for i in 0..d {
                jac[i][j] = (zp[i] - zm[i]) / (2.0 * h);
            }
        }
        ln_abs_det(jac)
    }

    pub fn ln_abs_det(mut a: Vec<Vec<f64>>) -> f64 {
        let d = a.len();
        let mut acc = 0.0;
        for c in 0..d {
            let p = (c..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            let piv = a[c][c];
            acc += piv.abs().ln();
            for r in c + 1..d {
                let f = a[r][c] / piv;
                for k in c..d {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn latent_norm_examples() {
        let id = AffineGaussianFlow::<f64>::identity(2);
        assert_relative_eq!(latent_norm(&id, &[], &[3.0, 4.0]).unwrap(), 5.0);

        let f = AffineGaussianFlow::new(2, |x: &[f64]| x.to_vec(), |_: &[f64]| vec![2.0, 0.0, 0.0, 2.0]);
        assert_relative_eq!(
            latent_norm(&f, &[1.0, 1.0], &[3.0, 3.0]).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-15
        );
        let y0 = f.forward(&[0.0, 0.0], &[0.3, -0.2]).unwrap();
        assert_eq!(latent_norm(&f, &[0.3, -0.2], &y0).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_response_is_rejected() {
        let id = AffineGaussianFlow::<f64>::identity(2);
        assert!(matches!(latent_norm(&id, &[], &[f64::NAN, 0.0]), Err(Error::Flow(_))));
    }

    #[test]
    fn base_log_density_examples() {
        let id = AffineGaussianFlow::<f64>::identity(2);
        let v = base_log_density(&id, &[], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, -(2.0 * std::f64::consts::PI).ln(), max_relative = 1e-15);
        assert_relative_eq!(v, -1.837_877, epsilon = 1e-6);

        let f = AffineGaussianFlow::constant(vec![0.0], vec![2.0]);
        let v = base_log_density(&f, &[], &[0.0]).unwrap();
        assert_relative_eq!(v, (1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).ln(), max_relative = 1e-14);
    }

    #[test]
    fn base_density_integrates_to_one() {
        let f = AffineGaussianFlow::constant(vec![0.5, -1.0], vec![1.2, 0.0, 0.4, 0.7]);
        // trapezoid over [-8σ, 8σ]² around the mean
        let n = 400;
        let (lo0, hi0) = (0.5 - 8.0 * 1.2, 0.5 + 8.0 * 1.2);
        let (lo1, hi1) = (-1.0 - 8.0 * 1.3, -1.0 + 8.0 * 1.3);
        let (h0, h1) = ((hi0 - lo0) / n as f64, (hi1 - lo1) / n as f64);
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
                let y = [lo0 + i as f64 * h0, lo1 + j as f64 * h1];
                total += w * base_log_density(&f, &[], &y).unwrap().exp();
            }
        }
        assert!((total * h0 * h1 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let id = AffineGaussianFlow::<f64>::identity(2);
        let s = sample_base(&id, &[], 100_000, 7).unwrap();
        for k in 0..2 {
            let m = s.iter().map(|v| v[k]).sum::<f64>() / s.len() as f64;
            assert!(m.abs() < 0.02);
        }
        let f = AffineGaussianFlow::constant(vec![5.0, 5.0], vec![1.0, 0.0, 0.0, 1.0]);
        let s = sample_base(&f, &[], 100_000, 8).unwrap();
        for k in 0..2 {
            let m = s.iter().map(|v| v[k]).sum::<f64>() / s.len() as f64;
            assert!((m - 5.0).abs() < 0.02);
        }
        assert_eq!(sample_base(&f, &[], 50, 3).unwrap(), sample_base(&f, &[], 50, 3).unwrap());
        assert!(sample_base(&f, &[], 0, 3).is_err());
    }
}
