//! Base models, expressed in normalized units.

use std::sync::Arc;

use latrec::flow::Standardized;
use latrec::{AffineGaussianFlow, ConditionalFlow};
use nalgebra::DMatrix;

use crate::dataset::{Normalization, Part};
use crate::error::{BenchError, Result};

pub type Flow = Arc<dyn ConditionalFlow<f64>>;

/// A flow defined in original units, seen from normalized `x` and `y`.
pub fn normalized_view(original: Flow, norm: &Normalization) -> Result<Flow> {
    // `Standardized` maps inner units to outer ones as `m + s v`; here the
    // outer units are the normalized ones, so the constants are inverted.
    let invert = |mean: &[f64], sd: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (
            mean.iter().zip(sd).map(|(m, s)| -m / s).collect(),
            sd.iter().map(|s| 1.0 / s).collect(),
        )
    };
    let (xm, xs) = invert(&norm.x_mean, &norm.x_sd);
    let (ym, ys) = invert(&norm.y_mean, &norm.y_sd);
    Ok(Arc::new(Standardized::new(original, xm, xs, ym, ys)?))
}

/// Least-squares linear-Gaussian regression `Y | x ~ N(B [1, x], Σ)` with
/// `Σ` the residual covariance.
pub fn fit_linear_gaussian(train: &Part) -> Result<AffineGaussianFlow<f64>> {
    let n = train.len();
    let p = train.x.first().map_or(0, Vec::len);
    let d = train.y.first().map_or(0, Vec::len);
    if n <= p + 1 + d {
        return Err(BenchError::Model(format!(
            "{n} training rows are too few for {p} covariates and {d} responses"
        )));
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { train.x[i][j - 1] });
    let resp = DMatrix::from_fn(n, d, |i, k| train.y[i][k]);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&resp, 1e-12)
        .map_err(|e| BenchError::Model(format!("least squares failed: {e}")))?;
    let resid = &resp - &design * &coef;
    let cov = resid.transpose() * &resid / (n - p - 1) as f64;
    let chol = cov
        .cholesky()
        .ok_or_else(|| BenchError::Model("residual covariance is not positive definite".into()))?;
    let l = chol.l();
    let coef_rows: Vec<f64> = (0..d)
        .flat_map(|k| (0..=p).map(move |j| (k, j)))
        .map(|(k, j)| coef[(j, k)])
        .collect();
    let scale: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
    Ok(AffineGaussianFlow::linear(coef_rows, p, scale).named(format!("linear-gaussian-p{p}-d{d}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use latrec::flow::synthetic::SyntheticTask;
    use latrec::{base_log_density, ConditionalFlow};

    #[test]
    fn normalized_view_shifts_the_density_by_the_scale() {
        let task = SyntheticTask::well_specified(2);
        let (xs, ys) = task.sample::<f64>(200, 1);
        let part = Part { x: xs, y: ys };
        let norm = Normalization::fit(&part).unwrap();
        let flow: Flow = Arc::new(task.base_flow::<f64>());
        let view = normalized_view(flow.clone(), &norm).unwrap();
        let scaled = norm.apply(&part);
        let ln_sd: f64 = norm.y_sd.iter().map(|s| s.ln()).sum();
        for i in 0..5 {
            let orig = base_log_density(flow.as_ref(), &part.x[i], &part.y[i]).unwrap();
            let n = base_log_density(view.as_ref(), &scaled.x[i], &scaled.y[i]).unwrap();
            assert!((n - (orig + ln_sd)).abs() < 1e-10);
            let (z, _) = flow.inverse(&part.y[i], &part.x[i]).unwrap();
            let (zn, _) = view.inverse(&scaled.y[i], &scaled.x[i]).unwrap();
            assert!(z.iter().zip(&zn).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn least_squares_recovers_a_linear_model() {
        // y = (1 + 2 x, -x) + N(0, diag(0.25, 0.01)) noise
        let truth = AffineGaussianFlow::linear(vec![1.0, 2.0, 0.0, -1.0], 1, vec![0.5, 0.0, 0.0, 0.1]);
        let xs: Vec<Vec<f64>> = (0..4000).map(|i| vec![(i as f64 / 4000.0) * 2.0 - 1.0]).collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| latrec::sample_base(&truth, x, 1, i as u64).unwrap().remove(0))
            .collect();
        let fitted = fit_linear_gaussian(&Part { x: xs, y: ys }).unwrap();
        let y = fitted.forward(&[0.0, 0.0], &[0.5]).unwrap();
        assert!((y[0] - 2.0).abs() < 0.05 && (y[1] + 0.5).abs() < 0.02, "{y:?}");
        let y1 = fitted.forward(&[1.0, 0.0], &[0.5]).unwrap();
        assert!((y1[0] - y[0] - 0.5).abs() < 0.03, "{y1:?}");
        assert!(fit_linear_gaussian(&Part {
            x: vec![vec![1.0]; 3],
            y: vec![vec![1.0]; 3]
        })
        .is_err());
    }
}
