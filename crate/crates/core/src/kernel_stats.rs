//! Kernel and density utilities: empirical covariance, Mahalanobis distance,
//! Gaussian smoothing kernel, Silverman bandwidth, multivariate Student-t and
//! Gaussian densities, and discrete grid priors.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Initial ridge factor relative to the mean diagonal of W.
pub const RIDGE_START: f64 = 1e-8;
/// Largest ridge factor tried before giving up.
pub const RIDGE_MAX: f64 = 1e-4;

/// Default Student-t degrees of freedom for the first proposal.
pub const DEFAULT_NU: f64 = 4.0;
/// Default inflation of the MPLE covariance for the first proposal.
pub const DEFAULT_OMEGA: f64 = 4.0;

/// W = (1/N) Σ (s − s̄)(s − s̄)ᵀ.
pub fn empirical_cov(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "covariance needs at least 2 samples, got {}",
            n
        )));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::Degenerate("zero-dimensional samples".into()));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut w = DMatrix::zeros(d, d);
    for s in samples {
        for a in 0..d {
            let da = s[a] - mean[a];
            for b in a..d {
                w[(a, b)] += da * (s[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            w[(a, b)] /= n as f64;
            w[(b, a)] = w[(a, b)];
        }
    }
    Ok(w)
}

/// Cholesky of a symmetric matrix, adding a ridge ε·tr(W)/d·I with ε
/// escalating from [`RIDGE_START`] to [`RIDGE_MAX`] if the plain
/// factorization fails. Returns the factor and the ridge added.
pub fn regularized_cholesky(w: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = w.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let d = w.nrows();
    let scale = w.trace() / d as f64;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate(
            "summary statistics have no variability; increase the simulation budget or burn-in"
                .into(),
        ));
    }
    let mut eps = RIDGE_START;
    while eps <= RIDGE_MAX * (1.0 + 1e-12) {
        let ridge = eps * scale;
        let mut m = w.clone();
        for k in 0..d {
            m[(k, k)] += ridge;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c, ridge));
        }
        eps *= 10.0;
    }
    Err(Error::NotPositiveDefinite(
        " (covariance of summary statistics, even after ridge regularization)".into(),
    ))
}

/// Squared Mahalanobis distance under a fixed covariance.
#[derive(Debug, Clone)]
pub struct Mahalanobis {
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
}

impl Mahalanobis {
    pub fn new(w: &DMatrix<f64>) -> Result<Self> {
        let (chol, ridge) = regularized_cholesky(w)?;
        Ok(Mahalanobis { chol, ridge })
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// (s − s_obs)ᵀ W⁻¹ (s − s_obs).
    pub fn distance_sq(&self, s: &[f64], s_obs: &[f64]) -> f64 {
        let diff = DVector::from_iterator(s.len(), s.iter().zip(s_obs).map(|(a, b)| a - b));
        let z = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }
}

pub fn mahalanobis_sq(s: &[f64], s_obs: &[f64], w: &DMatrix<f64>) -> Result<f64> {
    if s.len() != w.nrows() || s_obs.len() != w.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            got: s.len().min(s_obs.len()),
        });
    }
    Ok(Mahalanobis::new(w)?.distance_sq(s, s_obs))
}

/// Sample quantile with linear interpolation between order statistics
/// (R's default "type 7").
pub fn sample_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// h = 0.9 · min(sd, IQR/1.34) · N^(−1/5).
pub fn silverman_from_moments(sd: f64, iqr: f64, n: usize) -> f64 {
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Silverman's rule-of-thumb bandwidth for a univariate sample.
pub fn silverman_bandwidth(distances: &[f64]) -> Result<f64> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "bandwidth needs at least 2 distances, got {}",
            n
        )));
    }
    let mean = distances.iter().sum::<f64>() / n as f64;
    let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[0] == sorted[n - 1] || !(sd > 0.0) {
        return Err(Error::Degenerate(
            "all distances are equal; cannot choose a bandwidth. Increase the simulation budget"
                .into(),
        ));
    }
    let iqr = sample_quantile(&sorted, 0.75) - sample_quantile(&sorted, 0.25);
    Ok(silverman_from_moments(sd, iqr, n))
}

/// K_h(d) = exp(−d²/(2h²)).
pub fn gaussian_kernel(d: f64, h: f64) -> Result<f64> {
    Ok(log_gaussian_kernel(d, h)?.exp())
}

pub fn log_gaussian_kernel(d: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Degenerate(format!("bandwidth must be positive, got {}", h)));
    }
    Ok(-d * d / (2.0 * h * h))
}

/// A distribution over parameter vectors that can be sampled and evaluated.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

fn symmetric_check(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let tol = 1e-10 * m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::NotPositiveDefinite(format!(" ({} is not symmetric)", what)));
            }
        }
    }
    Ok(())
}

/// Multivariate Student-t 𝒯_ν(μ, Σ).
#[derive(Debug, Clone)]
pub struct ProposalT {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    nu: f64,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl ProposalT {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Config(format!(
                "degrees of freedom must be positive, got {}",
                nu
            )));
        }
        if sigma.nrows() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: sigma.nrows(),
            });
        }
        symmetric_check(&sigma, "Student-t scale matrix")?;
        let chol = sigma.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(" (Student-t scale matrix)".into())
        })?;
        let p = mu.len() as f64;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        let log_norm = ln_gamma((nu + p) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * p * (nu * PI).ln()
            - 0.5 * log_det;
        Ok(ProposalT {
            mu: DVector::from_vec(mu),
            chol_l: chol.l(),
            sigma,
            nu,
            log_norm,
        })
    }

    pub fn mu(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// μ + L z / √(u/ν) with z ~ N(0, I), u ~ χ²_ν.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.mu.len();
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let u: f64 = ChiSquared::new(self.nu)
            .expect("positive degrees of freedom")
            .sample(rng);
        let scale = (self.nu / u).sqrt();
        let x = &self.mu + (&self.chol_l * z) * scale;
        x.as_slice().to_vec()
    }

    pub fn logpdf(&self, theta: &[f64]) -> f64 {
        let p = self.mu.len() as f64;
        let diff = DVector::from_iterator(
            theta.len(),
            theta.iter().zip(self.mu.iter()).map(|(a, b)| a - b),
        );
        let z = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * (self.nu + p) * (z.norm_squared() / self.nu).ln_1p()
    }
}

impl Density for ProposalT {
    fn dim(&self) -> usize {
        self.mu.len()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.logpdf(x)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        ProposalT::sample(self, rng)
    }
}

pub fn studentt_sample<R: Rng + ?Sized>(prop: &ProposalT, rng: &mut R) -> Vec<f64> {
    prop.sample(rng)
}

pub fn studentt_logpdf(prop: &ProposalT, theta: &[f64]) -> f64 {
    prop.logpdf(theta)
}

/// Multivariate normal prior N(μ₀, Σ₀).
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mu0: DVector<f64>,
    sigma0: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianPrior {
    pub fn new(mu0: Vec<f64>, sigma0: DMatrix<f64>) -> Result<Self> {
        if sigma0.nrows() != mu0.len() {
            return Err(Error::DimensionMismatch {
                expected: mu0.len(),
                got: sigma0.nrows(),
            });
        }
        symmetric_check(&sigma0, "prior covariance")?;
        let chol = sigma0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(" (prior covariance)".into()))?;
        let p = mu0.len() as f64;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        Ok(GaussianPrior {
            mu0: DVector::from_vec(mu0),
            chol_l: chol.l(),
            sigma0,
            log_norm: -0.5 * p * (2.0 * PI).ln() - 0.5 * log_det,
        })
    }

    /// N(μ₀, v·I).
    pub fn isotropic(mu0: Vec<f64>, variance: f64) -> Result<Self> {
        let p = mu0.len();
        Self::new(mu0, DMatrix::identity(p, p) * variance)
    }

    pub fn mean(&self) -> &[f64] {
        self.mu0.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn logpdf(&self, theta: &[f64]) -> f64 {
        let diff = DVector::from_iterator(
            theta.len(),
            theta.iter().zip(self.mu0.iter()).map(|(a, b)| a - b),
        );
        let z = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.mu0.len();
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.mu0 + &self.chol_l * z).as_slice().to_vec()
    }
}

impl Density for GaussianPrior {
    fn dim(&self) -> usize {
        self.mu0.len()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.logpdf(x)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        GaussianPrior::sample(self, rng)
    }
}

pub fn gaussian_logpdf(prior: &GaussianPrior, theta: &[f64]) -> f64 {
    prior.logpdf(theta)
}

/// Discrete prior on a finite set of parameter points.
#[derive(Debug, Clone)]
pub struct GridPrior {
    points: Vec<Vec<f64>>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridPrior {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Config(
                "grid prior needs one non-negative weight per point".into(),
            ));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("grid points differ in dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Config("grid prior weights must be non-negative".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(GridPrior {
            points,
            probs,
            cumulative,
        })
    }

    /// Uniform prior over the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let k = points.len();
        Self::new(points, vec![1.0; k])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the grid point equal to `x`, if any.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= 1e-12))
    }
}

impl Density for GridPrior {
    fn dim(&self) -> usize {
        self.points[0].len()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.index_of(x)
            .map_or(f64::NEG_INFINITY, |k| self.probs[k].ln())
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self
            .cumulative
            .partition_point(|c| *c <= u)
            .min(self.points.len() - 1);
        self.points[k].clone()
    }
}

/// Prior distribution on θ.
#[derive(Debug, Clone)]
pub enum Prior {
    Gaussian(GaussianPrior),
    Grid(GridPrior),
}

impl Density for Prior {
    fn dim(&self) -> usize {
        match self {
            Prior::Gaussian(g) => Density::dim(g),
            Prior::Grid(g) => g.dim(),
        }
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Prior::Gaussian(g) => g.logpdf(x),
            Prior::Grid(g) => g.log_density(x),
        }
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            Prior::Gaussian(g) => GaussianPrior::sample(g, rng),
            Prior::Grid(g) => Density::sample(g, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn covariance_uses_one_over_n() {
        let w = empirical_cov(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(w[(0, 0)], 1.0);
        let w = empirical_cov(&vec![vec![1.0, 2.0]; 4]).unwrap();
        assert_eq!(w, DMatrix::zeros(2, 2));
        assert!(empirical_cov(&[vec![1.0]]).is_err());
    }

    #[test]
    fn identical_samples_cannot_be_regularized() {
        let w = DMatrix::zeros(2, 2);
        assert!(matches!(Mahalanobis::new(&w), Err(Error::Degenerate(_))));
    }

    #[test]
    fn collinear_covariance_gets_a_ridge() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let w = empirical_cov(&samples).unwrap();
        let m = Mahalanobis::new(&w).unwrap();
        assert!(m.ridge() > 0.0);
        assert!(m.distance_sq(&[1.0, 2.0], &[0.0, 0.0]).is_finite());
    }

    #[test]
    fn mahalanobis_identity() {
        let w = DMatrix::identity(2, 2);
        assert!((mahalanobis_sq(&[1.0, 2.0], &[0.0, 0.0], &w).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(mahalanobis_sq(&[3.0, 4.0], &[3.0, 4.0], &w).unwrap(), 0.0);
    }

    #[test]
    fn silverman_formula_and_errors() {
        assert!((silverman_from_moments(1.0, 1.34, 100_000) - 0.09).abs() < 1e-12);
        assert!(silverman_bandwidth(&[1.0, 1.0, 1.0]).is_err());
        assert!(silverman_bandwidth(&[1.0]).is_err());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(0.0, 0.3).unwrap(), 1.0);
        assert!((gaussian_kernel(0.3, 0.3).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(0.1, 0.3).unwrap() > gaussian_kernel(0.2, 0.3).unwrap());
        assert!(gaussian_kernel(1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_logpdf_at_mean() {
        let prior = GaussianPrior::isotropic(vec![0.5, -1.0, 2.0], 1.0).unwrap();
        let expect = -1.5 * (2.0 * PI).ln();
        assert!((prior.logpdf(&[0.5, -1.0, 2.0]) - expect).abs() < 1e-14);
        let a = prior.logpdf(&[1.5, -1.0, 1.0]);
        let b = prior.logpdf(&[-0.5, -1.0, 3.0]);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn studentt_symmetry() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let t = ProposalT::new(vec![1.0, -2.0], sigma, 4.0).unwrap();
        let a = t.logpdf(&[1.7, -2.4]);
        let b = t.logpdf(&[0.3, -1.6]);
        assert!((a - b).abs() < 1e-13);
        assert!(ProposalT::new(vec![0.0], DMatrix::from_element(1, 1, -1.0), 4.0).is_err());
    }

    #[test]
    fn grid_prior_sampling_hits_points() {
        let g = GridPrior::new(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]).unwrap();
        let mut rng = stream(5, 0);
        let ones = (0..4000)
            .filter(|_| Density::sample(&g, &mut rng)[0] == 1.0)
            .count();
        assert!((ones as f64 / 4000.0 - 0.75).abs() < 0.03);
        assert_eq!(g.log_density(&[0.5]), f64::NEG_INFINITY);
        assert!((g.log_density(&[1.0]) - 0.75f64.ln()).abs() < 1e-15);
    }
}
