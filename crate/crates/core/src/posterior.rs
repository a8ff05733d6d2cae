//! Posterior summaries from weighted draws: kernel-weighted moments,
//! monotone-spline quantiles, SIR resampling and effective sample size.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel_stats::silverman_bandwidth;

/// One sampled parameter with its simulated summary and weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedDraw {
    pub theta: Vec<f64>,
    pub stats: Vec<f64>,
    /// Unnormalized importance ratio π(θ)/f(θ).
    pub w_importance: f64,
    /// Kernel weight K_h(d).
    pub w_kernel: f64,
    /// Normalized total weight.
    pub w: f64,
}

/// Quantile levels reported by default.
pub const DEFAULT_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Minimum number of distinct support points for a quantile.
pub const MIN_DISTINCT_SUPPORT: usize = 3;

/// Σ w a(θ).
pub fn weighted_moment<F: Fn(&[f64]) -> f64>(draws: &[WeightedDraw], a: F) -> f64 {
    draws.iter().map(|d| d.w * a(&d.theta)).sum()
}

pub fn weighted_mean(draws: &[WeightedDraw]) -> Vec<f64> {
    let p = draws.first().map_or(0, |d| d.theta.len());
    (0..p).map(|j| weighted_moment(draws, |t| t[j])).collect()
}

/// Var = E[θ²] − (E[θ])² per coordinate, clamped at zero.
pub fn weighted_variance(draws: &[WeightedDraw]) -> Vec<f64> {
    weighted_mean(draws)
        .iter()
        .enumerate()
        .map(|(j, m)| (weighted_moment(draws, |t| t[j] * t[j]) - m * m).max(0.0))
        .collect()
}

/// 1 / Σ w².
pub fn ess(draws: &[WeightedDraw]) -> f64 {
    ess_of(draws.iter().map(|d| d.w))
}

pub(crate) fn ess_of(weights: impl Iterator<Item = f64>) -> f64 {
    let s2: f64 = weights.map(|w| w * w).sum();
    if s2 > 0.0 {
        1.0 / s2
    } else {
        0.0
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson).
#[derive(Debug, Clone)]
pub struct MonotoneSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneSpline {
    /// `x` strictly increasing, `y` non-decreasing.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let k = x.len();
        if k < 2 || y.len() != k {
            return Err(Error::Degenerate("spline needs at least two knots".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Degenerate("spline knots must increase strictly".into()));
        }
        let delta: Vec<f64> = (0..k - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut m = vec![0.0; k];
        m[0] = delta[0];
        m[k - 1] = delta[k - 2];
        for i in 1..k - 1 {
            m[i] = if delta[i - 1] * delta[i] <= 0.0 {
                0.0
            } else {
                0.5 * (delta[i - 1] + delta[i])
            };
        }
        for i in 0..k - 1 {
            if delta[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let a = m[i] / delta[i];
            let b = m[i + 1] / delta[i];
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                m[i] = tau * a * delta[i];
                m[i + 1] = tau * b * delta[i];
            }
        }
        Ok(MonotoneSpline { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Value at `t`, held constant outside the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[k - 1] {
            return self.y[k - 1];
        }
        let i = self.x.partition_point(|&xi| xi <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.m[i] + h01 * self.y[i + 1] + h11 * h * self.m[i + 1]
    }
}

/// Weighted ECDF knots: each distinct value carries the cumulative weight
/// below it plus half its own mass.
pub fn ecdf_knots(values: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    let mut xs: Vec<f64> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for (x, w) in pairs {
        match xs.last() {
            Some(&last) if last == x => *masses.last_mut().unwrap() += w,
            _ => {
                xs.push(x);
                masses.push(w);
            }
        }
    }
    let mut acc = 0.0;
    let f = masses
        .iter()
        .map(|w| {
            let mid = (acc + 0.5 * w) / total;
            acc += w;
            mid
        })
        .collect();
    (xs, f)
}

/// Smoothed marginal CDF of coordinate `j`.
pub fn marginal_cdf(draws: &[WeightedDraw], j: usize) -> Result<MonotoneSpline> {
    let values: Vec<f64> = draws.iter().map(|d| d.theta[j]).collect();
    let weights: Vec<f64> = draws.iter().map(|d| d.w).collect();
    let (x, f) = ecdf_knots(&values, &weights);
    if x.len() < MIN_DISTINCT_SUPPORT {
        return Err(Error::Degenerate(format!(
            "quantiles need at least {} distinct values, coordinate {} has {}",
            MIN_DISTINCT_SUPPORT,
            j,
            x.len()
        )));
    }
    MonotoneSpline::new(x, f)
}

/// The q-th quantile of coordinate `j`: the point where the smoothed
/// weighted ECDF crosses q, located by bisection.
pub fn quantile(draws: &[WeightedDraw], j: usize, q: f64) -> Result<f64> {
    let cdf = marginal_cdf(draws, j)?;
    quantile_of(&cdf, q)
}

pub fn quantile_of(cdf: &MonotoneSpline, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("quantile level must be in (0, 1), got {}", q)));
    }
    let (mut lo, mut hi) = cdf.domain();
    if q <= cdf.eval(lo) {
        return Ok(lo);
    }
    if q >= cdf.eval(hi) {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = cdf.eval(mid);
        if (f - q).abs() < 1e-8 {
            return Ok(mid);
        }
        if f < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draw `m` equal-weight parameter vectors proportionally to the weights.
///
/// `with_replacement = None` picks without replacement when m ≤ N/10.
pub fn sir_resample<R: Rng + ?Sized>(
    draws: &[WeightedDraw],
    m: usize,
    with_replacement: Option<bool>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = draws.len();
    if m == 0 {
        return Err(Error::Config("resample size must be at least 1".into()));
    }
    let replace = with_replacement.unwrap_or(m > n / 10);
    if !replace && m > n {
        return Err(Error::Config(format!(
            "cannot draw {} of {} without replacement",
            m, n
        )));
    }
    if replace {
        let dist = WeightedIndex::new(draws.iter().map(|d| d.w))
            .map_err(|e| Error::Degenerate(format!("resampling weights: {}", e)))?;
        Ok((0..m).map(|_| draws[dist.sample(rng)].theta.clone()).collect())
    } else {
        // Efraimidis-Spirakis keys reproduce sequential weighted draws
        // without replacement
        let mut keys: Vec<(f64, usize)> = draws
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let u: f64 = rng.random::<f64>();
                let key = if d.w > 0.0 { u.ln() / d.w } else { f64::NEG_INFINITY };
                (key, i)
            })
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(keys[..m].iter().map(|&(_, i)| draws[i].theta.clone()).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Per coordinate: quantile level (as text) → value.
    pub quantiles: Vec<BTreeMap<String, f64>>,
    pub ess: f64,
    pub n_draws: usize,
}

pub fn summarize(draws: &[WeightedDraw], levels: &[f64]) -> Result<PosteriorSummary> {
    if draws.is_empty() {
        return Err(Error::Degenerate("no draws to summarize".into()));
    }
    let mean = weighted_mean(draws);
    let sd = weighted_variance(draws).iter().map(|v| v.sqrt()).collect();
    let mut quantiles = Vec::with_capacity(mean.len());
    for j in 0..mean.len() {
        let cdf = marginal_cdf(draws, j)?;
        let mut map = BTreeMap::new();
        for &q in levels {
            map.insert(format!("{}", q), quantile_of(&cdf, q)?);
        }
        quantiles.push(map);
    }
    Ok(PosteriorSummary {
        mean,
        sd,
        quantiles,
        ess: ess(draws),
        n_draws: draws.len(),
    })
}

/// Gaussian kernel density estimate of `values` on an evenly spaced grid
/// covering the sample plus four bandwidths each side.
pub fn density_table(values: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    let h = silverman_bandwidth(values)?;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..points)
        .map(|k| {
            let x = lo + k as f64 * step;
            let dens: f64 = values
                .iter()
                .map(|v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum();
            (x, dens * norm)
        })
        .collect())
}
