//! Gamma-kernel density estimate of the latent norm distribution.
//!
//! One kernel `Γ(t_i λ, λ)` (shape, rate) per calibration point, each with
//! mean `t_i`, where `t = g(l)` is the (cube-root by default) transformed norm.
//! The rate `λ` is chosen by k-fold cross-validated held-out NLL.
//!
//! Evaluations only touch kernels that matter: the kernel log-density is
//! concave in the shape, and `P(a, x)` decreases in `a`, so with kernels sorted
//! by center the relevant ones form a contiguous window found by bisection.
//! Contributions more than `WINDOW` nats below the dominant one are dropped.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_norm, check_norms, CalibrationMap, Transform, NORM_FLOOR};
use crate::error::{domain, Error, Result};
use crate::rng::{derive_seed, stream};
use crate::scalar::Real;
use crate::special::{digamma, ln_gamma, ln_gamma_pq, solve_increasing};

const WINDOW: f64 = 45.0;

/// The rate grid `10^(-5 + 10 i / 99)`, `i = 0..=99`.
pub fn lambda_grid() -> Vec<f64> {
    (0..100)
        .map(|i| match i {
            0 => 1e-5,
            99 => 1e5,
            _ => 10f64.powf(-5.0 + 10.0 * i as f64 / 99.0),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdeOptions {
    pub folds: usize,
    pub seed: u64,
    pub transform: Transform,
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            transform: Transform::CubeRoot,
        }
    }
}

/// Kernels for one rate, sorted by shape.
#[derive(Debug, Clone)]
struct Kernels<T: Real> {
    rate: T,
    ln_rate: T,
    shape: Vec<T>,
    ln_gamma_shape: Vec<T>,
    digamma_shape: Vec<T>,
    ln_n: T,
}

/// First index in `0..n` where `pred` turns false, for a predicate that is
/// true on a prefix.
fn first_false(n: usize, mut pred: impl FnMut(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

impl<T: Real> Kernels<T> {
    fn new(sorted_centers: &[T], rate: T) -> Self {
        let shape: Vec<T> = sorted_centers.iter().map(|&c| c * rate).collect();
        Self {
            rate,
            ln_rate: rate.ln(),
            ln_gamma_shape: shape.iter().map(|&a| ln_gamma(a)).collect(),
            digamma_shape: shape.iter().map(|&a| digamma(a)).collect(),
            shape,
            ln_n: T::from_usize_lossy(sorted_centers.len()).ln(),
        }
    }

    /// The kernels at sorted positions `keep`.
    fn subset(&self, keep: &[usize]) -> Self {
        let pick = |v: &[T]| keep.iter().map(|&i| v[i]).collect::<Vec<T>>();
        Self {
            rate: self.rate,
            ln_rate: self.ln_rate,
            shape: pick(&self.shape),
            ln_gamma_shape: pick(&self.ln_gamma_shape),
            digamma_shape: pick(&self.digamma_shape),
            ln_n: T::from_usize_lossy(keep.len()).ln(),
        }
    }

    fn len(&self) -> usize {
        self.shape.len()
    }

    /// Log-density in the transformed space.
    fn ln_pdf(&self, t: T) -> T {
        if t <= T::zero() {
            // limits of t^(a-1) at 0
            let a0 = self.shape[0];
            return if a0 < T::one() {
                T::infinity()
            } else if a0 == T::one() {
                let ones = self.shape.iter().take_while(|&&a| a == T::one()).count();
                self.ln_rate + T::from_usize_lossy(ones).ln() - self.ln_n
            } else {
                T::neg_infinity()
            };
        }
        if t.is_infinite() {
            return T::neg_infinity();
        }
        let ln_t = t.ln();
        let rt = self.rate * t;
        let term = |i: usize| self.shape[i] * (self.ln_rate + ln_t) - self.ln_gamma_shape[i] - ln_t - rt;
        let n = self.len();
        let (peak, top) = self.largest_term(t);
        if top == T::neg_infinity() {
            return top;
        }
        let cut = top - T::c(WINDOW);
        let mut sum = T::zero();
        let mut i = peak;
        while i > 0 {
            let v = term(i - 1);
            if v < cut {
                break;
            }
            sum += (v - top).exp();
            i -= 1;
        }
        for j in peak..n {
            let v = term(j);
            if v < cut {
                break;
            }
            sum += (v - top).exp();
        }
        top + sum.ln() - self.ln_n
    }

    /// Position and value of the largest kernel log-density at `t > 0`; an
    /// upper bound on the mixture log-density.
    fn largest_term(&self, t: T) -> (usize, T) {
        let ln_t = t.ln();
        let ln_rt = self.ln_rate + ln_t;
        let rt = self.rate * t;
        let term = |i: usize| self.shape[i] * ln_rt - self.ln_gamma_shape[i] - ln_t - rt;
        // the term is concave in the shape with its maximum where ψ(a) = ln(λ t)
        let n = self.len();
        let peak = first_false(n, |i| self.digamma_shape[i] < ln_rt);
        let top = [peak.saturating_sub(1), peak.min(n - 1)]
            .iter()
            .map(|&i| term(i))
            .fold(T::neg_infinity(), T::max);
        (peak, top)
    }

    /// `(ln F, ln S)` in the transformed space.
    fn ln_cdf_pair(&self, t: T) -> (T, T) {
        self.ln_cdf_pair_with(t, PANEL_MIN_KERNELS)
    }

    fn ln_cdf_pair_with(&self, t: T, panel_min: usize) -> (T, T) {
        if t <= T::zero() {
            return (T::neg_infinity(), T::zero());
        }
        if t.is_infinite() {
            return (T::zero(), T::neg_infinity());
        }
        let n = self.len();
        let x = self.rate * t;
        let pq = |i: usize| ln_gamma_pq(self.shape[i], x);
        let sat = -T::c(WINDOW);

        // lower tail: kernels below `full` have P = 1 to working precision,
        // kernels from `lo_end` on are negligible next to the largest P
        let lo_cut = pq(0).0 - T::c(WINDOW);
        let full = first_false(n, |i| pq(i).1 < sat);
        let lo_end = first_false(n, |i| pq(i).0 >= lo_cut).max(full);
        // upper tail, mirrored
        let hi_cut = pq(n - 1).1 - T::c(WINDOW);
        let hi_start = first_false(n, |i| pq(i).1 < hi_cut);
        let empty = first_false(n, |i| pq(i).0 >= sat).max(hi_start);

        let (a, b) = (full.min(hi_start), lo_end.max(empty));
        let mut panels =
            (b - a >= panel_min && self.shape[a] >= T::c(PANEL_MIN_SHAPE)).then(|| ShapePanels::new(self.shape[a], self.shape[b - 1], x));
        let mut side = |i: usize, upper: bool| match panels.as_mut() {
            Some(p) => p.eval(self.shape[i], upper),
            None => {
                let (lp, lq) = pq(i);
                if upper {
                    lq
                } else {
                    lp
                }
            }
        };
        // P falls and Q rises with the shape, so each sum is scaled by its
        // first (largest) term
        let mut sum = |range: std::ops::Range<usize>, count: usize, upper: bool| {
            let mut idx: Vec<usize> = range.collect();
            if upper {
                idx.reverse();
            }
            let Some(&first) = idx.first() else {
                return if count > 0 {
                    T::from_usize_lossy(count).ln()
                } else {
                    T::neg_infinity()
                };
            };
            let top = side(first, upper);
            let mut acc = if count > 0 {
                T::from_usize_lossy(count) * (-top).exp()
            } else {
                T::zero()
            };
            for &i in &idx {
                acc += (side(i, upper) - top).exp();
            }
            top + acc.ln()
        };
        let ln_f = sum(full..lo_end, full, false);
        let ln_s = sum(hi_start..empty, n - empty, true);
        ((ln_f - self.ln_n).min(T::zero()), (ln_s - self.ln_n).min(T::zero()))
    }

    fn quantile(&self, ln_tail: T, upper: bool, start: T) -> T {
        let tol = T::c(1e-12).max(T::tolerance());
        solve_increasing(
            |t| {
                let (lf, ls) = self.ln_cdf_pair(t);
                let lp = self.ln_pdf(t);
                if upper {
                    (ln_tail - ls, (lp - ls).exp())
                } else {
                    (lf - ln_tail, (lp - lf).exp())
                }
            },
            T::zero(),
            T::infinity(),
            start,
            tol,
        )
    }
}

/// Windows with at least this many kernels interpolate `(ln P, ln Q)` in the
/// shape instead of evaluating every kernel.
const PANEL_MIN_KERNELS: usize = 64;
/// Chebyshev nodes per panel.
const PANEL_NODES: usize = 24;
/// Smallest shape for which panels are used; keeps the pole of `Γ(a)` at
/// `a = 0` far from every panel.
const PANEL_MIN_SHAPE: f64 = 50.0;

/// Piecewise Chebyshev interpolation of `a ↦ (ln P(a, x), ln Q(a, x))` for a
/// fixed `x` over `[lo, hi]`.
///
/// Both are analytic in `a` with singularities about `2.8 √x` off the real
/// axis, so panels `4 √x` wide reach working precision with 24 nodes. Panels are built
/// on first use.
struct ShapePanels<T: Real> {
    x: T,
    lo: T,
    width: T,
    count: usize,
    built: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Real> ShapePanels<T> {
    fn new(lo: T, hi: T, x: T) -> Self {
        let span = hi - lo;
        let target = T::c(4.0) * x.sqrt().max(T::one());
        let count = (span / target).ceil().to_f64_lossy().max(1.0) as usize;
        Self {
            x,
            lo,
            width: span / T::from_usize_lossy(count),
            count,
            built: vec![None; count],
        }
    }

    /// `ln Q(a, x)` if `upper`, else `ln P(a, x)`.
    fn eval(&mut self, a: T, upper: bool) -> T {
        if self.width <= T::zero() {
            let (lp, lq) = ln_gamma_pq(a, self.x);
            return if upper { lq } else { lp };
        }
        let k = ((a - self.lo) / self.width).floor().to_f64_lossy().max(0.0) as usize;
        let k = k.min(self.count - 1);
        if self.built[k].is_none() {
            self.built[k] = Some(self.build(k));
        }
        let (cp, cq) = self.built[k].as_ref().expect("panel");
        let half = T::c(0.5) * self.width;
        let s = (a - (self.lo + self.width * T::from_usize_lossy(k) + half)) / half;
        let s = s.max(-T::one()).min(T::one());
        clenshaw(if upper { cq } else { cp }, s).min(T::zero())
    }

    fn build(&self, k: usize) -> (Vec<T>, Vec<T>) {
        let n = PANEL_NODES;
        let half = T::c(0.5) * self.width;
        let mid = self.lo + self.width * T::from_usize_lossy(k) + half;
        let angle = |j: usize, m: usize| T::c(std::f64::consts::PI * m as f64 * (j as f64 + 0.5) / n as f64);
        let values: Vec<(T, T)> = (0..n).map(|j| ln_gamma_pq(mid + half * angle(j, 1).cos(), self.x)).collect();
        let coef = |pick: fn(&(T, T)) -> T| -> Vec<T> {
            (0..n)
                .map(|m| {
                    let s = values
                        .iter()
                        .enumerate()
                        .fold(T::zero(), |acc, (j, v)| acc + pick(v) * angle(j, m).cos());
                    s * T::c(if m == 0 { 1.0 } else { 2.0 } / n as f64)
                })
                .collect()
        };
        (coef(|v| v.0), coef(|v| v.1))
    }
}

/// Chebyshev series `Σ c_m T_m(s)`.
fn clenshaw<T: Real>(c: &[T], s: T) -> T {
    let (mut b1, mut b2) = (T::zero(), T::zero());
    for &cm in c.iter().skip(1).rev() {
        let b0 = T::c(2.0) * s * b1 - b2 + cm;
        b2 = b1;
        b1 = b0;
    }
    s * b1 - b2 + c[0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct KdeParams<T: Real> {
    transform: Transform,
    rate: T,
    /// Kernel means in the transformed space, sorted.
    centers: Vec<T>,
}

/// Fitted Gamma-kernel density estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "KdeParams<T>", into = "KdeParams<T>")]
pub struct GammaKdeMap<T: Real> {
    params: KdeParams<T>,
    kernels: Kernels<T>,
}

impl<T: Real> TryFrom<KdeParams<T>> for GammaKdeMap<T> {
    type Error = Error;

    fn try_from(params: KdeParams<T>) -> Result<Self> {
        if params.centers.is_empty() || !(params.rate > T::zero() && params.rate.is_finite()) {
            return Err(Error::Format("Gamma KDE needs centers and a positive rate".into()));
        }
        if params.centers.iter().any(|c| !(c.is_finite() && *c > T::zero())) || params.centers.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format("Gamma KDE centers must be positive and sorted".into()));
        }
        let kernels = Kernels::new(&params.centers, params.rate);
        Ok(Self { params, kernels })
    }
}

impl<T: Real> From<GammaKdeMap<T>> for KdeParams<T> {
    fn from(m: GammaKdeMap<T>) -> Self {
        m.params
    }
}

fn prepared<T: Real>(norms: &[T], transform: Transform) -> Vec<T> {
    let floor = T::c(NORM_FLOOR);
    let mut t: Vec<T> = norms.iter().map(|&l| transform.apply(l.max(floor))).collect();
    t.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    t
}

impl<T: Real> GammaKdeMap<T> {
    /// Kernel estimate at a fixed rate.
    pub fn with_rate(norms: &[T], rate: T, transform: Transform) -> Result<Self> {
        check_norms(norms, 1)?;
        Self::try_from(KdeParams {
            transform,
            rate,
            centers: prepared(norms, transform),
        })
    }

    /// Rate chosen by cross-validation over [`lambda_grid`].
    pub fn fit(norms: &[T], opts: KdeOptions) -> Result<Self> {
        let folds = opts.folds.max(2);
        check_norms(norms, folds)?;
        let scores = cv_scores(norms, &opts)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            // strict: ties keep the smaller rate
            if *s < scores[best] {
                best = i;
            }
        }
        if !scores[best].is_finite() {
            return Err(Error::Divergence("every candidate rate gives an infinite held-out NLL".into()));
        }
        log::debug!(
            "gamma kde: rate {} (grid index {best}), cv nll {}",
            lambda_grid()[best],
            scores[best]
        );
        Self::with_rate(norms, T::c(lambda_grid()[best]), opts.transform)
    }

    pub fn rate(&self) -> T {
        self.params.rate
    }

    pub fn transform(&self) -> Transform {
        self.params.transform
    }

    /// Kernel means in the transformed space.
    pub fn centers(&self) -> &[T] {
        &self.params.centers
    }

    fn start(&self, p: T) -> T {
        let c = &self.params.centers;
        let i = (p.to_f64_lossy() * c.len() as f64).floor() as usize;
        c[i.min(c.len() - 1)]
    }
}

/// Mean held-out NLL (transformed space) for every grid rate.
///
/// A rate whose score provably exceeds the best one already computed is
/// reported as `+∞`: the held-out NLL is bounded below by the sum of
/// `-max_i ln k_i(t)`, which is cheap and tight exactly where the kernels are
/// too broad for windowing to help. Rates are visited from largest to
/// smallest so the cheap narrow-kernel scores come first.
pub(crate) fn cv_scores<T: Real>(norms: &[T], opts: &KdeOptions) -> Result<Vec<f64>> {
    cv_scores_impl(norms, opts, true)
}

fn cv_scores_impl<T: Real>(norms: &[T], opts: &KdeOptions, prune: bool) -> Result<Vec<f64>> {
    let folds = opts.folds.max(2);
    let n = norms.len();
    let floor = T::c(NORM_FLOOR);
    let t: Vec<T> = norms.iter().map(|&l| opts.transform.apply(l.max(floor))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(derive_seed(opts.seed, &[0xcf01])));

    // sorted positions of every point, and per-fold train/held-out splits
    let mut by_value: Vec<usize> = (0..n).collect();
    by_value.sort_by(|&i, &j| t[i].partial_cmp(&t[j]).expect("finite"));
    let sorted: Vec<T> = by_value.iter().map(|&i| t[i]).collect();
    let mut fold_of = vec![0; n];
    for f in 0..folds {
        for &i in &order[f * n / folds..(f + 1) * n / folds] {
            fold_of[i] = f;
        }
    }
    let splits: Vec<(Vec<usize>, Vec<T>)> = (0..folds)
        .map(|f| {
            let train = (0..n).filter(|&p| fold_of[by_value[p]] != f).collect();
            let held = order[f * n / folds..(f + 1) * n / folds].iter().map(|&i| t[i]).collect();
            (train, held)
        })
        .collect();

    let grid = lambda_grid();
    let mut scores = vec![f64::INFINITY; grid.len()];
    let mut best = f64::INFINITY;
    for (r, &rate) in grid.iter().enumerate().rev() {
        let all = Kernels::new(&sorted, T::c(rate));
        let fold_kernels: Vec<Kernels<T>> = splits.iter().map(|(train, _)| all.subset(train)).collect();
        if prune && best.is_finite() {
            let mut bound = 0.0;
            for (k, (_, held)) in fold_kernels.iter().zip(&splits) {
                bound -= held.iter().map(|&v| k.largest_term(v).1.to_f64_lossy()).sum::<f64>();
            }
            if bound / n as f64 > best {
                continue;
            }
        }
        let mut s = 0.0;
        'folds: for (k, (_, held)) in fold_kernels.iter().zip(&splits) {
            for &v in held {
                s -= k.ln_pdf(v).to_f64_lossy();
                if !s.is_finite() {
                    s = f64::INFINITY;
                    break 'folds;
                }
            }
        }
        scores[r] = s / n as f64;
        best = best.min(scores[r]);
    }
    Ok(scores)
}

impl<T: Real> CalibrationMap<T> for GammaKdeMap<T> {
    fn len(&self) -> usize {
        self.params.centers.len()
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn ln_cdf_pair(&self, l: T) -> Result<(T, T)> {
        check_norm("GammaKdeMap::cdf", l)?;
        Ok(self.kernels.ln_cdf_pair(self.params.transform.apply(l)))
    }

    fn log_pdf(&self, l: T) -> Result<T> {
        check_norm("GammaKdeMap::log_pdf", l)?;
        let tr = self.params.transform;
        let t = tr.apply(l);
        Ok(self.kernels.ln_pdf(t) + tr.ln_derivative(t))
    }

    fn quantile_from_ln_lower(&self, ln_p: T) -> Result<T> {
        if ln_p == T::neg_infinity() {
            return Ok(T::zero());
        }
        if ln_p >= T::zero() {
            return Ok(T::infinity());
        }
        let t = self.kernels.quantile(ln_p, false, self.start(ln_p.exp()));
        Ok(self.params.transform.invert(t))
    }

    fn quantile_from_ln_upper(&self, ln_q: T) -> Result<T> {
        if ln_q == T::neg_infinity() {
            return Ok(T::infinity());
        }
        if ln_q >= T::zero() {
            return Ok(T::zero());
        }
        let t = self.kernels.quantile(ln_q, true, self.start(T::one() - ln_q.exp()));
        Ok(self.params.transform.invert(t))
    }

    /// Exact mixture draw: a uniform kernel, then a Gamma variate.
    fn sample_norm(&self, rng: &mut dyn rand::RngCore) -> Result<T> {
        let k = &self.kernels;
        let i = rng.random_range(0..k.len());
        let g = rand_distr::Gamma::new(k.shape[i].to_f64_lossy(), 1.0 / k.rate.to_f64_lossy())
            .map_err(|e| domain("GammaKdeMap::sample_norm", e.to_string()))?;
        Ok(self.params.transform.invert(T::c(rng.sample(g))))
    }
}

#[cfg(test)]
mod tests {
    use super::super::EmpiricalCdfMap;
    use super::*;
    use crate::norm_laws::{Latent, NormLaw};
    use crate::special::gamma_p;
    use approx::assert_relative_eq;

    fn chi3_norms(n: usize, seed: u64) -> Vec<f64> {
        let lat = Latent::gaussian(3);
        let mut rng = stream(seed);
        (0..n).map(|_| crate::scalar::norm(&lat.sample::<f64, _>(&mut rng))).collect()
    }

    fn brute_ln_pdf(centers: &[f64], rate: f64, t: f64) -> f64 {
        let s: f64 = centers
            .iter()
            .map(|&c| {
                let a = c * rate;
                (a * rate.ln() - ln_gamma(a) + (a - 1.0) * t.ln() - rate * t).exp()
            })
            .sum();
        (s / centers.len() as f64).ln()
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = lambda_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 1e-5);
        assert_eq!(g[99], 1e5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_kernel_is_a_gamma_cdf() {
        let (c, rate) = (2.0f64, 3.0);
        let m = GammaKdeMap::with_rate(&[c], rate, Transform::CubeRoot).unwrap();
        for &l in &[0.1f64, 1.0, 2.0, 5.0, 30.0] {
            let want = gamma_p(c.cbrt() * rate, rate * l.cbrt());
            assert_relative_eq!(m.cdf(l).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn windowed_sums_match_brute_force() {
        let norms = chi3_norms(300, 4);
        for &rate in &[1e-3, 0.5, 20.0, 800.0, 1e5] {
            let m = GammaKdeMap::with_rate(&norms, rate, Transform::Identity).unwrap();
            for &t in &[0.05, 0.4, 1.0, 1.6, 2.5, 4.0] {
                let want = brute_ln_pdf(m.centers(), rate, t);
                if want.is_finite() && want > -600.0 {
                    assert_relative_eq!(m.kernels.ln_pdf(t), want, max_relative = 1e-10, epsilon = 1e-10);
                }
                let f: f64 = m.centers().iter().map(|&c| gamma_p(c * rate, rate * t)).sum::<f64>() / 300.0;
                let (lf, ls) = m.ln_cdf_pair(t).unwrap();
                assert!((lf.exp() - f).abs() < 1e-13, "rate {rate} t {t}: {} vs {f}", lf.exp());
                let (_, ds) = m.kernels.ln_cdf_pair_with(m.params.transform.apply(t), usize::MAX);
                assert!(
                    (ls.exp() - (1.0 - f)).abs() < 1e-13,
                    "rate {rate} t {t}: {} vs {} direct {}",
                    ls.exp(),
                    1.0 - f,
                    ds.exp()
                );
            }
        }
    }

    #[test]
    fn panel_interpolation_matches_direct_sums() {
        let norms = chi3_norms(2000, 5);
        let mut worst = 0.0f64;
        for &rate in &[5.0, 60.0, 756.0, 1e4, 1e5] {
            let m = GammaKdeMap::with_rate(&norms, rate, Transform::CubeRoot).unwrap();
            for i in 1..400 {
                let t = i as f64 * 0.006;
                let (pf, ps) = m.kernels.ln_cdf_pair_with(t, PANEL_MIN_KERNELS);
                let (df, ds) = m.kernels.ln_cdf_pair_with(t, usize::MAX);
                for (p, d) in [(pf, df), (ps, ds)] {
                    if d.is_finite() {
                        worst = worst.max((p - d).abs() / d.abs().max(1.0));
                    } else {
                        assert_eq!(p, d);
                    }
                }
            }
        }
        assert!(worst <= 1e-13, "{worst:e}");
    }

    #[test]
    fn fit_recovers_chi3() {
        let norms = chi3_norms(10_000, 9);
        let m = GammaKdeMap::fit(&norms, KdeOptions::default()).unwrap();
        let law = NormLaw::chi(3).unwrap();
        let ks = (1..400)
            .map(|i| {
                let l = i as f64 * 0.015;
                (m.cdf(l).unwrap() - law.cdf(l).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.02, "KS {ks}");
    }

    #[test]
    fn mixture_draws_follow_the_cdf() {
        let norms = chi3_norms(500, 4);
        let m = GammaKdeMap::fit(&norms, KdeOptions::default()).unwrap();
        let mut rng = stream(11);
        let draws: Vec<f64> = (0..20_000).map(|_| m.sample_norm(&mut rng).unwrap()).collect();
        let ks = crate::metrics::ks_statistic(&draws, |l| m.cdf(l).unwrap());
        // 1% critical value at n = 20000
        assert!(ks < 1.63 / (20_000f64).sqrt(), "KS {ks}");
    }

    #[test]
    fn quantile_and_density_consistency() {
        let norms = chi3_norms(500, 2);
        let m = GammaKdeMap::fit(&norms, KdeOptions::default()).unwrap();
        for &p in &[1e-9, 0.01, 0.37, 0.5, 0.9, 1.0 - 1e-9] {
            let q = m.quantile(p).unwrap();
            assert!((m.cdf(q).unwrap() - p).abs() < 1e-9, "p {p}");
        }
        let h = 1e-5;
        for &l in &[0.5, 1.0, 1.7, 2.6] {
            let fd = (m.cdf(l + h).unwrap() - m.cdf(l - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(m.log_pdf(l).unwrap().exp(), fd, max_relative = 1e-4);
        }
        assert_eq!(m.cdf(0.0).unwrap(), 0.0);
        assert_eq!(m.quantile(0.0).unwrap(), 0.0);
    }

    #[test]
    fn large_rate_approaches_the_empirical_cdf() {
        let norms = chi3_norms(200, 6);
        let m = GammaKdeMap::with_rate(&norms, 1e5, Transform::CubeRoot).unwrap();
        let e = EmpiricalCdfMap::fit(&norms).unwrap();
        let mut grid: Vec<f64> = norms.clone();
        grid.extend(norms.iter().map(|v| v * 1.0001));
        let ks = grid
            .iter()
            .map(|&l| (m.cdf(l).unwrap() - e.cdf(l).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(ks <= 2.0 / 200.0, "KS {ks}");
    }

    #[test]
    fn fit_is_deterministic_and_round_trips() {
        let norms = chi3_norms(100, 1);
        let a = GammaKdeMap::fit(&norms, KdeOptions::default()).unwrap();
        let b = GammaKdeMap::fit(&norms, KdeOptions::default()).unwrap();
        let (ja, jb) = (serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(ja, jb);
        let back: GammaKdeMap<f64> = serde_json::from_str(&ja).unwrap();
        assert_eq!(back.cdf(1.2).unwrap(), a.cdf(1.2).unwrap());
    }

    #[test]
    fn pruning_keeps_the_argmin() {
        for seed in 0..3 {
            let norms = chi3_norms(300, seed);
            let opts = KdeOptions::default();
            let full = cv_scores_impl(&norms, &opts, false).unwrap();
            let pruned = cv_scores_impl(&norms, &opts, true).unwrap();
            let argmin = |s: &[f64]| (0..s.len()).fold(0, |b, i| if s[i] < s[b] { i } else { b });
            assert_eq!(argmin(&full), argmin(&pruned));
            for (a, b) in full.iter().zip(&pruned) {
                assert!(b.is_infinite() || a == b);
            }
        }
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            GammaKdeMap::fit(&[1.0, 2.0], KdeOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        assert!(GammaKdeMap::fit(
            &[1.0; 12].iter().copied().chain([f64::NAN]).collect::<Vec<_>>(),
            KdeOptions::default()
        )
        .is_err());
    }
}
