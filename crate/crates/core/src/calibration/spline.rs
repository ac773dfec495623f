//! Monotone rational-quadratic spline model of the latent norm distribution.
//!
//! Standardized transformed norms `s` are modelled as `s = Ψ(u)` with
//! `u ~ N(0, 1)` and `Ψ = atanh ∘ Φ ∘ tanh`, `Φ` a rational-quadratic spline
//! on `[-1, 1]`. Hence `F(s) = F_N(Ψ^{-1}(s))` and `f(s) = φ(u) / Ψ'(u)`.
//! The model is truncated to `l >= 0` and renormalized.
//!
//! Every spline evaluation tracks `ln(1 ± w)` and `ln(1 ± Φ)` instead of `w`
//! and `Φ`, so that `Ψ` stays accurate where `tanh` saturates.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::{check_norm, check_norms, CalibrationMap, Transform, NORM_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{ln1mexp, log_add_exp, norm_log_cdf, norm_log_pdf, norm_quantile_from_ln_lower};

const MIN_BIN: f64 = 1e-3;
const MIN_DERIVATIVE: f64 = 1e-3;

/// Bin count for `n` calibration norms.
pub fn bins_for(n: usize) -> usize {
    match n {
        0..=30 => 4,
        31..=50 => 5,
        51..=70 => 6,
        71..=80 => 7,
        81..=90 => 8,
        91..=100 => 9,
        _ => 10,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplineOptions {
    /// Overrides [`bins_for`].
    pub bins: Option<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without an improvement of `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    pub transform: Transform,
}

impl Default for SplineOptions {
    fn default() -> Self {
        Self {
            bins: None,
            learning_rate: 1e-2,
            max_epochs: 5000,
            patience: 50,
            min_improvement: 1e-4,
            transform: Transform::CubeRoot,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Unconstrained spline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Raw {
    widths: Vec<f64>,
    heights: Vec<f64>,
    derivatives: Vec<f64>,
}

impl Raw {
    fn identity(bins: usize) -> Self {
        // softplus(d) + MIN_DERIVATIVE = 1
        let d = (1.0 - MIN_DERIVATIVE).exp_m1().ln();
        Self {
            widths: vec![0.0; bins],
            heights: vec![0.0; bins],
            derivatives: vec![d; bins + 1],
        }
    }

    fn bins(&self) -> usize {
        self.widths.len()
    }

    fn to_vec(&self) -> Vec<f64> {
        self.widths.iter().chain(&self.heights).chain(&self.derivatives).copied().collect()
    }

    fn from_vec(bins: usize, v: &[f64]) -> Self {
        Self {
            widths: v[..bins].to_vec(),
            heights: v[bins..2 * bins].to_vec(),
            derivatives: v[2 * bins..].to_vec(),
        }
    }
}

/// Constrained spline: knot spacing measured from both ends, and derivatives.
#[derive(Debug, Clone)]
struct Knots<T: Real> {
    width: Vec<T>,
    height: Vec<T>,
    /// `x_k + 1`, `k = 0..=B`.
    left: Vec<T>,
    /// `1 - x_k`.
    right: Vec<T>,
    /// `y_k + 1`.
    low: Vec<T>,
    /// `1 - y_k`.
    high: Vec<T>,
    delta: Vec<T>,
}

fn bin_sizes(raw: &[f64]) -> Vec<f64> {
    let b = raw.len() as f64;
    softmax(raw)
        .into_iter()
        .map(|p| 2.0 * (MIN_BIN + (1.0 - MIN_BIN * b) * p))
        .collect()
}

fn from_left(sizes: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    *out.last_mut().unwrap() = 2.0;
    out
}

fn from_right(sizes: &[f64]) -> Vec<f64> {
    let b = sizes.len();
    let mut out = vec![0.0; b + 1];
    for k in (0..b).rev() {
        out[k] = out[k + 1] + sizes[k];
    }
    out[0] = 2.0;
    out
}

impl<T: Real> Knots<T> {
    fn new(raw: &Raw) -> Self {
        let w = bin_sizes(&raw.widths);
        let h = bin_sizes(&raw.heights);
        let cv = |v: Vec<f64>| v.into_iter().map(T::c).collect::<Vec<T>>();
        Self {
            left: cv(from_left(&w)),
            right: cv(from_right(&w)),
            low: cv(from_left(&h)),
            high: cv(from_right(&h)),
            width: cv(w),
            height: cv(h),
            delta: raw.derivatives.iter().map(|&d| T::c(MIN_DERIVATIVE + softplus(d))).collect(),
        }
    }

    fn bins(&self) -> usize {
        self.width.len()
    }

    /// `(Ψ(u), ln Ψ'(u))`.
    fn psi(&self, u: T) -> (T, T) {
        if u.is_infinite() {
            return (u, T::zero());
        }
        let ln2 = T::LN_2();
        // ln(1 + tanh u) and ln(1 - tanh u)
        let ln_a = ln2 - softplus_t(-T::c(2.0) * u);
        let ln_b = ln2 - softplus_t(T::c(2.0) * u);
        let a = ln_a.exp();
        let k = (self.left.partition_point(|&x| x <= a) - 1).min(self.bins() - 1);
        let ln_xi = ln_gap(ln_a, self.left[k]) - self.width[k].ln();
        let ln_1mxi = ln_gap(ln_b, self.right[k + 1]) - self.width[k].ln();
        let (xi, om) = (ln_xi.exp(), ln_1mxi.exp());
        let (d0, d1) = (self.delta[k], self.delta[k + 1]);
        let s = self.height[k] / self.width[k];
        let den = s * (xi * xi + om * om) + (d0 + d1) * xi * om;
        let ln_h_den = self.height[k].ln() - den.ln();
        let ln_up = ln_h_den + ln_xi + (s * xi + d0 * om).ln();
        let ln_down = ln_h_den + ln_1mxi + (s * om + d1 * xi).ln();
        let ln_1p = log_add_exp(self.low[k].ln(), ln_up);
        let ln_1m = log_add_exp(self.high[k + 1].ln(), ln_down);
        let ln_dphi = T::c(2.0) * s.ln() + (d1 * xi * xi + T::c(2.0) * s * xi * om + d0 * om * om).ln() - T::c(2.0) * den.ln();
        (T::c(0.5) * (ln_1p - ln_1m), ln_dphi + ln_a + ln_b - ln_1p - ln_1m)
    }

    /// `Ψ^{-1}(s)`.
    fn psi_inverse(&self, s: T) -> T {
        if s.is_infinite() {
            return s;
        }
        let ln2 = T::LN_2();
        let ln_a = ln2 - softplus_t(-T::c(2.0) * s);
        let ln_b = ln2 - softplus_t(T::c(2.0) * s);
        let a = ln_a.exp();
        let k = (self.low.partition_point(|&y| y <= a) - 1).min(self.bins() - 1);
        let (d0, d1) = (self.delta[k], self.delta[k + 1]);
        let h = self.height[k];
        let sl = h / self.width[k];
        let beta_lo = ln_gap(ln_a, self.low[k]).exp();
        let beta_hi = ln_gap(ln_b, self.high[k + 1]).exp();
        // solve from the nearer end of the bin; the other end is the mirror image
        let root = |beta: T, da: T, db: T| {
            let sum = da + db - T::c(2.0) * sl;
            let qa = h * (sl - da) + beta * sum;
            let qb = h * da - beta * sum;
            let qc = -sl * beta;
            let disc = (qb * qb - T::c(4.0) * qa * qc).max(T::zero());
            (T::c(2.0) * qc / (-qb - disc.sqrt())).max(T::zero()).min(T::one())
        };
        let (xi, om) = if beta_lo <= beta_hi {
            let xi = root(beta_lo, d0, d1);
            (xi, T::one() - xi)
        } else {
            let om = root(beta_hi, d1, d0);
            (T::one() - om, om)
        };
        let w = self.width[k];
        let ln_1p = if self.left[k] == T::zero() {
            xi.ln() + w.ln()
        } else {
            (self.left[k] + xi * w).ln()
        };
        let ln_1m = if self.right[k + 1] == T::zero() {
            om.ln() + w.ln()
        } else {
            (self.right[k + 1] + om * w).ln()
        };
        T::c(0.5) * (ln_1p - ln_1m)
    }
}

fn softplus_t<T: Real>(x: T) -> T {
    if x > T::c(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(e^{ln_v} - c)` for `c >= 0`, exact in `ln_v` when `c = 0`.
fn ln_gap<T: Real>(ln_v: T, c: T) -> T {
    if c == T::zero() {
        ln_v
    } else {
        (ln_v.exp() - c).max(T::zero()).ln()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct SplineParams<T: Real> {
    transform: Transform,
    mean: T,
    sd: T,
    raw: Raw,
}

/// Fitted spline estimate of the norm distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "SplineParams<T>", into = "SplineParams<T>")]
pub struct SplineMap<T: Real> {
    params: SplineParams<T>,
    knots: Knots<T>,
    n: usize,
    /// `ln F_N(u_0)`, the model mass below `l = 0`.
    ln_c0: T,
    /// `ln(1 - F_N(u_0))`.
    ln_keep: T,
}

impl<T: Real> TryFrom<SplineParams<T>> for SplineMap<T> {
    type Error = Error;

    fn try_from(params: SplineParams<T>) -> Result<Self> {
        let b = params.raw.bins();
        if b == 0 || params.raw.heights.len() != b || params.raw.derivatives.len() != b + 1 {
            return Err(Error::Format("inconsistent spline parameter lengths".into()));
        }
        if !(params.sd > T::zero() && params.sd.is_finite() && params.mean.is_finite()) {
            return Err(Error::Format("spline standardization must be finite with sd > 0".into()));
        }
        let knots = Knots::new(&params.raw);
        let s0 = (params.transform.apply(T::zero()) - params.mean) / params.sd;
        let u0 = knots.psi_inverse(s0);
        let ln_c0 = norm_log_cdf(u0);
        Ok(Self {
            ln_keep: ln1mexp(ln_c0),
            ln_c0,
            knots,
            n: 0,
            params,
        })
    }
}

impl<T: Real> From<SplineMap<T>> for SplineParams<T> {
    fn from(m: SplineMap<T>) -> Self {
        m.params
    }
}

impl<T: Real> SplineMap<T> {
    pub fn fit(norms: &[T], opts: SplineOptions) -> Result<Self> {
        check_norms(norms, 5)?;
        let floor = T::c(NORM_FLOOR);
        let t: Vec<f64> = norms.iter().map(|&l| opts.transform.apply(l.max(floor)).to_f64_lossy()).collect();
        let n = t.len() as f64;
        let mean = t.iter().sum::<f64>() / n;
        let sd = (t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if !(sd > 0.0) {
            return Err(Error::InsufficientData("calibration norms have zero spread".into()));
        }
        let data: Vec<f64> = t.iter().map(|v| (v - mean) / sd).collect();
        let bins = opts.bins.unwrap_or_else(|| bins_for(norms.len()));
        let raw = train(&data, bins, &opts)?;
        let mut map = Self::try_from(SplineParams {
            transform: opts.transform,
            mean: T::c(mean),
            sd: T::c(sd),
            raw,
        })?;
        map.n = norms.len();
        Ok(map)
    }

    pub fn bins(&self) -> usize {
        self.knots.bins()
    }

    /// Mean NLL of standardized values under the untruncated model.
    pub fn standardized_nll(&self, s: &[T]) -> T {
        let total: T = s
            .iter()
            .map(|&v| {
                let u = self.knots.psi_inverse(v);
                let (_, ln_d) = self.knots.psi(u);
                ln_d - norm_log_pdf(u)
            })
            .sum();
        total / T::from_usize_lossy(s.len())
    }

    fn standardize(&self, l: T) -> (T, T) {
        let t = self.params.transform.apply(l);
        (t, (t - self.params.mean) / self.params.sd)
    }

    fn from_u(&self, u: T) -> T {
        let s = self.knots.psi(u).0;
        let t = (self.params.mean + self.params.sd * s).max(T::zero());
        self.params.transform.invert(t)
    }

    fn u_from_ln_lower(ln_f: T) -> T {
        if ln_f <= T::c(0.5).ln() {
            norm_quantile_from_ln_lower(ln_f)
        } else {
            -norm_quantile_from_ln_lower(ln1mexp(ln_f))
        }
    }
}

impl<T: Real> CalibrationMap<T> for SplineMap<T> {
    fn len(&self) -> usize {
        self.n
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn ln_cdf_pair(&self, l: T) -> Result<(T, T)> {
        check_norm("SplineMap::cdf", l)?;
        if l == T::zero() {
            return Ok((T::neg_infinity(), T::zero()));
        }
        let (_, s) = self.standardize(l);
        let u = self.knots.psi_inverse(s);
        let (lf, ls) = (norm_log_cdf(u), norm_log_cdf(-u));
        let lf = if lf <= self.ln_c0 {
            T::neg_infinity()
        } else {
            lf + ln1mexp(self.ln_c0 - lf)
        };
        Ok(((lf - self.ln_keep).min(T::zero()), (ls - self.ln_keep).min(T::zero())))
    }

    fn log_pdf(&self, l: T) -> Result<T> {
        check_norm("SplineMap::log_pdf", l)?;
        let (t, s) = self.standardize(l);
        let u = self.knots.psi_inverse(s);
        let (_, ln_d) = self.knots.psi(u);
        Ok(norm_log_pdf(u) - ln_d - self.params.sd.ln() + self.params.transform.ln_derivative(t) - self.ln_keep)
    }

    fn quantile_from_ln_lower(&self, ln_p: T) -> Result<T> {
        if ln_p == T::neg_infinity() {
            return Ok(T::zero());
        }
        let ln_f = log_add_exp(self.ln_c0, ln_p + self.ln_keep);
        Ok(self.from_u(Self::u_from_ln_lower(ln_f.min(T::zero()))))
    }

    fn quantile_from_ln_upper(&self, ln_q: T) -> Result<T> {
        if ln_q >= T::zero() {
            return Ok(T::zero());
        }
        let ln_s = ln_q + self.ln_keep;
        let u = if ln_s <= T::c(0.5).ln() {
            -norm_quantile_from_ln_lower(ln_s)
        } else {
            norm_quantile_from_ln_lower(ln1mexp(ln_s))
        };
        Ok(self.from_u(u))
    }
}

// ---------------------------------------------------------------------------
// Training

/// Forward-mode dual number over the bin-local variables
/// `(left, width, low, height, δ_k, δ_{k+1}, u)`.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; 7],
}

impl Dual {
    fn cst(v: f64) -> Self {
        Self { v, d: [0.0; 7] }
    }
    fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 7];
        d[i] = 1.0;
        Self { v, d }
    }
    fn map(self, v: f64, dv: f64) -> Self {
        Self {
            v,
            d: self.d.map(|x| x * dv),
        }
    }
    fn ln(self) -> Self {
        self.map(self.v.ln(), 1.0 / self.v)
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.map(t, 1.0 - t * t)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + (-o)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: self.d.map(|x| -x),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; 7];
        for (i, x) in d.iter_mut().enumerate() {
            *x = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let mut d = [0.0; 7];
        for (i, x) in d.iter_mut().enumerate() {
            *x = (self.d[i] - self.v * o.d[i] * inv) * inv;
        }
        Dual { v: self.v * inv, d }
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self * o.v,
            d: o.d.map(|x| x * self),
        }
    }
}

/// `(Ψ(u), ln Ψ'(u))` in one bin, with derivatives.
fn psi_dual(local: [f64; 6], u: f64) -> (Dual, Dual) {
    let [l, w, lo, h, d0, d1] = [0, 1, 2, 3, 4, 5].map(|i| Dual::var(local[i], i));
    let u = Dual::var(u, 6);
    let one = Dual::cst(1.0);
    let wv = u.tanh();
    let xi = (wv + one - l) / w;
    let om = one - xi;
    let s = h / w;
    let xo = xi * om;
    let den = s + (d0 + d1 - 2.0 * s) * xo;
    let phi = lo - one + h * (s * xi * xi + d0 * xo) / den;
    let dphi = s * s * (d1 * xi * xi + 2.0 * s * xo + d0 * om * om) / (den * den);
    let psi = 0.5 * ((one + phi).ln() - (one - phi).ln());
    let ln_d = dphi.ln() + (one - wv * wv).ln() - (one - phi * phi).ln();
    (psi, ln_d)
}

/// Loss and gradient with respect to the raw parameter vector.
fn loss_and_grad(data: &[f64], bins: usize, theta: &[f64]) -> (f64, Vec<f64>) {
    let raw = Raw::from_vec(bins, theta);
    let knots: Knots<f64> = Knots::new(&raw);
    let mut g_left = vec![0.0; bins];
    let mut g_w = vec![0.0; bins];
    let mut g_low = vec![0.0; bins];
    let mut g_h = vec![0.0; bins];
    let mut g_d = vec![0.0; bins + 1];
    let mut loss = 0.0;
    for &s in data {
        let u = knots.psi_inverse(s);
        let a = 1.0 + u.tanh();
        let k = (knots.left.partition_point(|&x| x <= a) - 1).min(bins - 1);
        let local = [
            knots.left[k],
            knots.width[k],
            knots.low[k],
            knots.height[k],
            knots.delta[k],
            knots.delta[k + 1],
        ];
        let (psi, ln_d) = psi_dual(local, u);
        loss += ln_d.v - norm_log_pdf(u);
        // u solves Ψ(u; θ) = s, so du/dθ = -∂_θΨ / Ψ'
        let dpsi_du = psi.d[6];
        let outer = u + ln_d.d[6];
        let mut g = [0.0; 6];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = ln_d.d[i] - outer * psi.d[i] / dpsi_du;
        }
        g_left[k] += g[0];
        g_w[k] += g[1];
        g_low[k] += g[2];
        g_h[k] += g[3];
        g_d[k] += g[4];
        g_d[k + 1] += g[5];
    }
    let n = data.len() as f64;
    // left_k = Σ_{j<k} width_j
    let mut acc = 0.0;
    for k in (0..bins).rev() {
        g_w[k] += acc;
        acc += g_left[k];
    }
    let mut acc = 0.0;
    for k in (0..bins).rev() {
        g_h[k] += acc;
        acc += g_low[k];
    }
    let softmax_back = |raw: &[f64], g: &[f64]| {
        let p = softmax(raw);
        let scale = 2.0 * (1.0 - MIN_BIN * bins as f64);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        p.iter().zip(g).map(|(pi, gi)| scale * pi * (gi - dot)).collect::<Vec<f64>>()
    };
    let mut grad = softmax_back(&raw.widths, &g_w);
    grad.extend(softmax_back(&raw.heights, &g_h));
    grad.extend(raw.derivatives.iter().zip(&g_d).map(|(r, g)| g * sigmoid(*r)));
    (loss / n, grad.into_iter().map(|g| g / n).collect())
}

fn train(data: &[f64], bins: usize, opts: &SplineOptions) -> Result<Raw> {
    let mut theta = Raw::identity(bins).to_vec();
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut best = (f64::INFINITY, theta.clone());
    // loss at the last improvement of at least `min_improvement`
    let mut reference = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=opts.max_epochs {
        let (loss, grad) = loss_and_grad(data, bins, &theta);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "spline loss became {loss} at epoch {epoch} (best {:.6})",
                best.0
            )));
        }
        if loss < best.0 {
            best = (loss, theta.clone());
        }
        if loss < reference - opts.min_improvement {
            reference = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.patience {
                log::debug!("spline: stopped at epoch {epoch}, loss {:.6}", best.0);
                break;
            }
        }
        let (c1, c2) = (1.0 - b1.powi(epoch as i32), 1.0 - b2.powi(epoch as i32));
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] -= opts.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
    Ok(Raw::from_vec(bins, &best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm_laws::{Latent, NormLaw};
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn random_raw(bins: usize, seed: u64) -> Raw {
        use rand::Rng;
        let mut rng = stream(seed);
        let mut r = || rng.random_range(-1.0..1.0);
        Raw {
            widths: (0..bins).map(|_| r()).collect(),
            heights: (0..bins).map(|_| r()).collect(),
            derivatives: (0..=bins).map(|_| r()).collect(),
        }
    }

    #[test]
    fn bin_table() {
        assert_eq!(bins_for(30), 4);
        assert_eq!(bins_for(31), 5);
        assert_eq!(bins_for(85), 8);
        assert_eq!(bins_for(95), 9);
        assert_eq!(bins_for(100), 9);
        assert_eq!(bins_for(101), 10);
        assert_eq!(bins_for(5000), 10);
    }

    #[test]
    fn identity_spline_is_identity() {
        let k: Knots<f64> = Knots::new(&Raw::identity(6));
        for &u in &[-30.0, -3.0, -0.2, 0.0, 0.7, 4.0, 25.0] {
            let (p, ld) = k.psi(u);
            assert_relative_eq!(p, u, epsilon = 1e-12, max_relative = 1e-12);
            assert!(ld.abs() < 1e-12);
            assert_relative_eq!(k.psi_inverse(u), u, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn psi_inverse_round_trip_and_derivative() {
        for seed in 0..5 {
            let k: Knots<f64> = Knots::new(&random_raw(7, seed));
            for i in -60..=60 {
                let u = i as f64 * 0.25;
                let (s, ld) = k.psi(u);
                assert_relative_eq!(k.psi_inverse(s), u, epsilon = 1e-9, max_relative = 1e-9);
                let h = 1e-6;
                let fd = (k.psi(u + h).0 - k.psi(u - h).0) / (2.0 * h);
                assert_relative_eq!(ld.exp(), fd, max_relative = 1e-5);
            }
            // far tails stay finite and ordered
            let (a, b) = (k.psi(40.0).0, k.psi(200.0).0);
            assert!(a.is_finite() && b.is_finite() && b > a);
        }
    }

    #[test]
    fn dual_matches_log_space_evaluation() {
        let raw = random_raw(5, 3);
        let k: Knots<f64> = Knots::new(&raw);
        for &u in &[-2.0f64, -0.3, 0.4, 1.9] {
            let a = 1.0 + u.tanh();
            let b = (k.left.partition_point(|&x| x <= a) - 1).min(4);
            let local = [k.left[b], k.width[b], k.low[b], k.height[b], k.delta[b], k.delta[b + 1]];
            let (p, ld) = psi_dual(local, u);
            let (pe, lde) = k.psi(u);
            assert_relative_eq!(p.v, pe, max_relative = 1e-10);
            assert_relative_eq!(ld.v, lde, epsilon = 1e-10);
            assert_relative_eq!(p.d[6], lde.exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data: Vec<f64> = (0..40).map(|i| ((i as f64 * 0.37).sin() * 1.8) + 0.1 * i as f64 - 2.0).collect();
        let bins = 4;
        let theta = random_raw(bins, 9).to_vec();
        let (_, g) = loss_and_grad(&data, bins, &theta);
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (loss_and_grad(&data, bins, &tp).0 - loss_and_grad(&data, bins, &tm).0) / (2.0 * h);
            assert_relative_eq!(g[i], fd, max_relative = 1e-4, epsilon = 1e-7);
        }
    }

    #[test]
    fn gaussian_data_reaches_the_gaussian_nll() {
        // standardized data that is exactly normal quantiles
        let n = 200;
        let data: Vec<f64> = (1..=n)
            .map(|i| crate::special::norm_quantile((i as f64 - 0.5) / n as f64))
            .collect();
        let m = train(&data, 10, &SplineOptions::default()).unwrap();
        let k: Knots<f64> = Knots::new(&m);
        let nll: f64 = data
            .iter()
            .map(|&s| {
                let u = k.psi_inverse(s);
                k.psi(u).1 - norm_log_pdf(u)
            })
            .sum::<f64>()
            / n as f64;
        let analytic = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        assert!((nll - analytic).abs() < 0.05, "{nll} vs {analytic}");
    }

    #[test]
    fn fitted_map_is_a_distribution() {
        let lat = Latent::gaussian(2);
        let mut rng = stream(5);
        let norms: Vec<f64> = (0..400).map(|_| crate::scalar::norm(&lat.sample::<f64, _>(&mut rng))).collect();
        let m = SplineMap::fit(&norms, SplineOptions::default()).unwrap();
        assert_eq!(m.bins(), 10);
        assert_eq!(m.cdf(0.0).unwrap(), 0.0);
        for i in 1..200 {
            let l = i as f64 * 0.02;
            let q = m.quantile(m.cdf(l).unwrap()).unwrap();
            assert_relative_eq!(q, l, epsilon = 1e-6, max_relative = 1e-6);
        }
        // ∫ pdf over [0, q(1 - 1e-8)]
        let top = m.quantile(1.0 - 1e-8).unwrap();
        let steps = 20_000;
        let h = top / steps as f64;
        let mut total = 0.0;
        for i in 1..steps {
            total += m.log_pdf(i as f64 * h).unwrap().exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        let law = NormLaw::chi(2).unwrap();
        let ks = (1..100)
            .map(|i| (m.cdf(i as f64 * 0.04).unwrap() - law.cdf(i as f64 * 0.04).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.08, "KS {ks}");
        let h = 1e-5;
        for &l in &[0.6, 1.2, 2.0] {
            let fd = (m.cdf(l + h).unwrap() - m.cdf(l - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(m.log_pdf(l).unwrap().exp(), fd, max_relative = 1e-4);
        }
    }

    #[test]
    fn serialization_round_trip() {
        let norms: Vec<f64> = (1..=40).map(|i| i as f64 * 0.1).collect();
        let m = SplineMap::fit(&norms, SplineOptions::default()).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: SplineMap<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back.cdf(1.3).unwrap(), m.cdf(1.3).unwrap());
        assert!(SplineMap::fit(&norms[..4], SplineOptions::default()).is_err());
    }
}
