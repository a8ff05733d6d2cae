//! Approximate Bayesian computation: rejection ABC, kernel ABC with
//! importance sampling, and its adaptive multi-round variant.
//!
//! Graph simulation dominates the cost and runs as a parallel map over draws.
//! Every draw owns a random stream keyed by its index, so output is identical
//! for any worker count.

use std::sync::Arc;
use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernel_stats::{
    empirical_cov, log_gaussian_kernel, sample_quantile, silverman_bandwidth, Density,
    Mahalanobis, Prior, ProposalT, DEFAULT_NU, DEFAULT_OMEGA,
};
use crate::model::{apply_transform, BoundTerms, ModelSpec, StatVector, SummarySpec};
use crate::mple::fit_mple;
use crate::posterior::{ess_of, weighted_mean, WeightedDraw};
use crate::rng::{derive_seed, domain, stream};
use crate::sampler::{start_graph, ProposalKind, Sampler, StartState};

/// Observed network plus the model used to simulate and the summaries used
/// to compare.
#[derive(Debug, Clone)]
pub struct AbcProblem {
    observed: Graph,
    model: ModelSpec,
    summary: SummarySpec,
    sampler: Sampler,
    summary_terms: BoundTerms,
    start: StartState,
    s_obs: Vec<f64>,
}

impl AbcProblem {
    pub fn new(
        observed: Graph,
        model: ModelSpec,
        summary: Option<SummarySpec>,
        proposal: ProposalKind,
    ) -> Result<Self> {
        let summary = summary.unwrap_or_else(|| SummarySpec::from_model(&model));
        let sampler = Sampler::new(&model, &observed, proposal)?;
        let summary_terms = BoundTerms::bind(summary.terms(), &observed)?;
        let raw = StatVector(summary_terms.stats(&observed));
        let s_obs = apply_transform(&raw, &summary)?.into_inner();
        Ok(AbcProblem {
            observed,
            model,
            summary,
            sampler,
            summary_terms,
            start: StartState::Observed,
            s_obs,
        })
    }

    pub fn with_start(mut self, start: StartState) -> Self {
        self.start = start;
        self
    }

    pub fn observed(&self) -> &Graph {
        &self.observed
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn summary(&self) -> &SummarySpec {
        &self.summary
    }

    pub fn s_obs(&self) -> &[f64] {
        &self.s_obs
    }

    pub fn node_count(&self) -> usize {
        self.observed.node_count()
    }

    /// Summary of one graph simulated under θ after `burn_in` MH steps.
    pub fn simulate_summary<R: Rng + ?Sized>(&self, theta: &[f64], burn_in: u64, rng: &mut R) -> Vec<f64> {
        let mut g = start_graph(&self.observed, self.start);
        self.sampler.run(&mut g, theta, burn_in, rng);
        let raw = StatVector(self.summary_terms.stats(&g));
        apply_transform(&raw, &self.summary)
            .expect("graph statistics are non-negative")
            .into_inner()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {}", e)))?;
    Ok(pool.install(job))
}

/// One simulated summary per θ, in input order. Draw `i` uses stream `i`
/// of `master_seed`; `workers = 0` uses all available cores.
pub fn run_batch(
    problem: &AbcProblem,
    thetas: &[Vec<f64>],
    burn_in: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<Vec<f64>>> {
    for t in thetas {
        problem.check_theta(t)?;
    }
    with_workers(workers, || {
        thetas
            .par_iter()
            .enumerate()
            .map(|(i, theta)| {
                let mut rng = stream(master_seed, i as u64);
                problem.simulate_summary(theta, burn_in, &mut rng)
            })
            .collect()
    })
}

/// Where the first-round proposal comes from.
#[derive(Debug, Clone)]
pub enum InitialProposal {
    /// 𝒯_ν(θ̂_MPLE, ω·Î⁻¹).
    Mple,
    /// 𝒯_ν(μ, Σ) with the scale used as given.
    Supplied { mu: Vec<f64>, sigma: DMatrix<f64> },
    /// Sample from the prior itself; importance ratios are all 1.
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMode {
    /// Gaussian kernel on the Mahalanobis distance, bandwidth chosen on the
    /// same distances.
    #[default]
    Gaussian,
    /// Gaussian kernel on the squared distance (the raw quadratic form),
    /// bandwidth chosen on the squared values. Noticeably more biased on
    /// small graphs: it over-weights far draws whose heavy importance
    /// ratios then dominate.
    GaussianQuadratic,
    /// K ≡ 1, the h → ∞ limit.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundSpec {
    pub n: usize,
    pub nu: f64,
    pub omega: f64,
}

#[derive(Debug, Clone)]
pub struct AbcConfig {
    pub rounds: Vec<RoundSpec>,
    pub burn_in: u64,
    pub seed: u64,
    pub workers: usize,
    pub initial: InitialProposal,
    pub kernel: KernelMode,
    /// Pool all rounds at the end, reweighting against the mixture of
    /// proposals.
    pub retain_previous: bool,
}

impl AbcConfig {
    /// One importance-sampling round of `n` draws with the default ν and ω.
    pub fn single(n: usize, burn_in: u64, seed: u64) -> Self {
        AbcConfig {
            rounds: vec![RoundSpec {
                n,
                nu: DEFAULT_NU,
                omega: DEFAULT_OMEGA,
            }],
            burn_in,
            seed,
            workers: 0,
            initial: InitialProposal::Mple,
            kernel: KernelMode::Gaussian,
            retain_previous: false,
        }
    }

    /// Rounds with the given sizes, ν and ω schedules.
    pub fn adaptive(sizes: &[usize], nu: &[f64], omega: &[f64], burn_in: u64, seed: u64) -> Result<Self> {
        if sizes.len() != nu.len() || sizes.len() != omega.len() {
            return Err(Error::Config(format!(
                "schedules disagree in length: {} sizes, {} nu, {} omega",
                sizes.len(),
                nu.len(),
                omega.len()
            )));
        }
        Ok(AbcConfig {
            rounds: sizes
                .iter()
                .zip(nu)
                .zip(omega)
                .map(|((&n, &nu), &omega)| RoundSpec { n, nu, omega })
                .collect(),
            ..Self::single(0, burn_in, seed)
        })
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.rounds.is_empty() {
            return Err(Error::Config("at least one round is required".into()));
        }
        for (t, r) in self.rounds.iter().enumerate() {
            if r.n <= p {
                return Err(Error::Config(format!(
                    "round {} draws {} samples; need more than the {} parameters",
                    t + 1,
                    r.n,
                    p
                )));
            }
            if !(r.omega > 0.0) || !(r.nu > 0.0) {
                return Err(Error::Config(format!(
                    "round {} needs positive nu and omega",
                    t + 1
                )));
            }
        }
        if self.rounds.len() > 3 {
            warn!(
                "{} rounds requested; more than two or three rounds rarely improves the proposal",
                self.rounds.len()
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub n: usize,
    pub nu: f64,
    pub omega: f64,
    pub proposal_mean: Vec<f64>,
    pub proposal_scale: Vec<Vec<f64>>,
    pub bandwidth: f64,
    pub ridge: f64,
    pub ess: f64,
    pub posterior_mean: Vec<f64>,
    pub simulate_secs: f64,
    pub weight_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbcOutput {
    pub draws: Vec<WeightedDraw>,
    /// Bandwidth of the final weighting.
    pub bandwidth: f64,
    pub s_obs: Vec<f64>,
    pub rounds: Vec<RoundDiagnostics>,
}

#[derive(Clone)]
struct RoundProposal {
    density: Arc<dyn Density>,
    mean: Vec<f64>,
    scale: Vec<Vec<f64>>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn student_proposal(mu: Vec<f64>, sigma: DMatrix<f64>, nu: f64) -> Result<RoundProposal> {
    let scale = matrix_rows(&sigma);
    let t = ProposalT::new(mu.clone(), sigma, nu)?;
    Ok(RoundProposal {
        density: Arc::new(t),
        mean: mu,
        scale,
    })
}

/// Kernel-weighted draws from raw (θ, s, log w_I) triples.
pub struct Weighting {
    pub draws: Vec<WeightedDraw>,
    pub bandwidth: f64,
    pub ridge: f64,
}

/// Kernel weighting: W from the simulated summaries, Mahalanobis distances
/// to s_obs (squared under `GaussianQuadratic`), Silverman bandwidth on those
/// values, and weights ∝ w_I · K_h(d), normalized to sum to one.
pub fn kernel_weights(
    thetas: Vec<Vec<f64>>,
    stats: Vec<Vec<f64>>,
    log_importance: &[f64],
    s_obs: &[f64],
    kernel: KernelMode,
) -> Result<Weighting> {
    let w = empirical_cov(&stats)?;
    let metric = Mahalanobis::new(&w)?;
    let mut distances: Vec<f64> = stats.iter().map(|s| metric.distance_sq(s, s_obs)).collect();
    if kernel != KernelMode::GaussianQuadratic {
        distances.iter_mut().for_each(|d| *d = d.sqrt());
    }
    let (bandwidth, log_kernel): (f64, Vec<f64>) = match kernel {
        KernelMode::Gaussian | KernelMode::GaussianQuadratic => {
            let h = silverman_bandwidth(&distances)?;
            let lk = distances
                .iter()
                .map(|&d| log_gaussian_kernel(d, h))
                .collect::<Result<_>>()?;
            (h, lk)
        }
        KernelMode::Constant => (f64::INFINITY, vec![0.0; distances.len()]),
    };
    let log_total: Vec<f64> = log_importance
        .iter()
        .zip(&log_kernel)
        .map(|(a, b)| a + b)
        .collect();
    let weights = normalize_log_weights(&log_total)?;
    let draws = thetas
        .into_iter()
        .zip(stats)
        .zip(log_importance.iter().zip(&log_kernel))
        .zip(weights)
        .map(|(((theta, stats), (li, lk)), w)| WeightedDraw {
            theta,
            stats,
            w_importance: li.exp(),
            w_kernel: lk.exp(),
            w,
        })
        .collect();
    Ok(Weighting {
        draws,
        bandwidth,
        ridge: metric.ridge(),
    })
}

/// exp(l_i − max) / Σ, summed with compensation.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate(
            "every draw has zero weight; the proposal misses the prior support or the kernel underflowed"
                .into(),
        ));
    }
    let raw: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total = neumaier_sum(&raw);
    Ok(raw.into_iter().map(|r| r / total).collect())
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Weighted mean and ω-inflated weighted covariance of the draws.
fn refit(draws: &[WeightedDraw], omega: f64) -> (Vec<f64>, DMatrix<f64>) {
    let mu = weighted_mean(draws);
    let p = mu.len();
    let mut cov = DMatrix::zeros(p, p);
    for d in draws {
        for a in 0..p {
            let da = d.theta[a] - mu[a];
            for b in 0..p {
                cov[(a, b)] += d.w * da * (d.theta[b] - mu[b]);
            }
        }
    }
    (mu, cov * omega)
}

fn initial_proposal(problem: &AbcProblem, prior: &Prior, cfg: &AbcConfig) -> Result<RoundProposal> {
    let first = cfg.rounds[0];
    match &cfg.initial {
        InitialProposal::Mple => {
            let fit = fit_mple(problem.observed(), problem.model())?;
            student_proposal(fit.theta_hat.clone(), fit.covariance() * first.omega, first.nu)
        }
        InitialProposal::Supplied { mu, sigma } => {
            if mu.len() != problem.model().dim() {
                return Err(Error::DimensionMismatch {
                    expected: problem.model().dim(),
                    got: mu.len(),
                });
            }
            student_proposal(mu.clone(), sigma.clone(), first.nu)
        }
        InitialProposal::Prior => Ok(RoundProposal {
            density: Arc::new(prior.clone()),
            mean: Vec::new(),
            scale: Vec::new(),
        }),
    }
}

/// Rejection ABC threshold on the scaled Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Quantile of the pilot-run distances.
    PilotQuantile(f64),
}

#[derive(Debug, Clone)]
pub struct RejectionConfig {
    pub n_accept: usize,
    pub threshold: Threshold,
    pub pilot_size: usize,
    pub batch_size: usize,
    pub burn_in: u64,
    pub seed: u64,
    pub workers: usize,
    /// Abort once the acceptance rate is demonstrably below this floor.
    pub min_acceptance: f64,
}

impl RejectionConfig {
    pub fn new(n_accept: usize, burn_in: u64, seed: u64) -> Self {
        RejectionConfig {
            n_accept,
            threshold: Threshold::PilotQuantile(0.01),
            pilot_size: 1000,
            batch_size: 1000,
            burn_in,
            seed,
            workers: 0,
            min_acceptance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionOutput {
    pub thetas: Vec<Vec<f64>>,
    pub stats: Vec<Vec<f64>>,
    pub threshold: f64,
    pub scales: Vec<f64>,
    pub attempts: usize,
    pub acceptance_rate: f64,
}

impl RejectionOutput {
    /// Accepted draws as equally weighted draws.
    pub fn weighted_draws(&self) -> Vec<WeightedDraw> {
        let w = 1.0 / self.thetas.len().max(1) as f64;
        self.thetas
            .iter()
            .zip(&self.stats)
            .map(|(t, s)| WeightedDraw {
                theta: t.clone(),
                stats: s.clone(),
                w_importance: 1.0,
                w_kernel: 1.0,
                w,
            })
            .collect()
    }
}

fn scaled_distance(s: &[f64], s_obs: &[f64], scales: &[f64]) -> f64 {
    s.iter()
        .zip(s_obs)
        .zip(scales)
        .map(|((a, b), c)| ((a - b) / c).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Rejection ABC: draw θ from the prior, simulate, and keep θ when the
/// scaled Euclidean distance of its summary to s_obs is at most h.
pub fn rabc(problem: &AbcProblem, prior: &Prior, cfg: &RejectionConfig) -> Result<RejectionOutput> {
    if prior.dim() != problem.model().dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.model().dim(),
            got: prior.dim(),
        });
    }
    if cfg.n_accept == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("rejection ABC needs positive sample and batch sizes".into()));
    }
    let s_obs = problem.s_obs();
    let dim = s_obs.len();

    // pilot run: per-coordinate scales and the default threshold
    let mut scales = vec![1.0; dim];
    let mut pilot_distances = Vec::new();
    if cfg.pilot_size >= 2 {
        let mut rng = stream(derive_seed(cfg.seed, domain::PILOT, 0), 0);
        let thetas: Vec<Vec<f64>> = (0..cfg.pilot_size).map(|_| prior.sample(&mut rng)).collect();
        let stats = run_batch(
            problem,
            &thetas,
            cfg.burn_in,
            derive_seed(cfg.seed, domain::PILOT, 1),
            cfg.workers,
        )?;
        for (k, sc) in scales.iter_mut().enumerate() {
            let mean = stats.iter().map(|s| s[k]).sum::<f64>() / stats.len() as f64;
            let var = stats.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>()
                / (stats.len() - 1) as f64;
            if var > 0.0 {
                *sc = var.sqrt();
            }
        }
        pilot_distances = stats.iter().map(|s| scaled_distance(s, s_obs, &scales)).collect();
        pilot_distances.sort_by(f64::total_cmp);
    }
    let threshold = match cfg.threshold {
        Threshold::Fixed(h) if h >= 0.0 => h,
        Threshold::Fixed(h) => {
            return Err(Error::Config(format!("threshold must be non-negative, got {}", h)))
        }
        Threshold::PilotQuantile(q) => {
            if pilot_distances.is_empty() {
                return Err(Error::Config(
                    "a pilot-quantile threshold needs a pilot run of at least 2 draws".into(),
                ));
            }
            sample_quantile(&pilot_distances, q)
        }
    };

    let min_attempts = (10.0 / cfg.min_acceptance).ceil() as usize;
    let mut thetas = Vec::new();
    let mut stats_out = Vec::new();
    let mut attempts = 0usize;
    let mut batch = 0u64;
    while thetas.len() < cfg.n_accept {
        let mut rng = stream(derive_seed(cfg.seed, domain::PRIOR, batch), 0);
        let proposals: Vec<Vec<f64>> = (0..cfg.batch_size).map(|_| prior.sample(&mut rng)).collect();
        let sims = run_batch(
            problem,
            &proposals,
            cfg.burn_in,
            derive_seed(cfg.seed, domain::SIMULATION, batch),
            cfg.workers,
        )?;
        for (theta, s) in proposals.into_iter().zip(sims) {
            attempts += 1;
            if scaled_distance(&s, s_obs, &scales) <= threshold {
                thetas.push(theta);
                stats_out.push(s);
                if thetas.len() == cfg.n_accept {
                    break;
                }
            }
        }
        let rate = thetas.len() as f64 / attempts as f64;
        if thetas.len() < cfg.n_accept && attempts >= min_attempts && rate < cfg.min_acceptance {
            return Err(Error::AcceptanceFloor {
                rate,
                floor: cfg.min_acceptance,
                attempts,
            });
        }
        batch += 1;
    }
    Ok(RejectionOutput {
        acceptance_rate: thetas.len() as f64 / attempts as f64,
        thetas,
        stats: stats_out,
        threshold,
        scales,
        attempts,
    })
}

struct RoundResult {
    weighting: Weighting,
    log_prior: Vec<f64>,
    simulate_secs: f64,
    weight_secs: f64,
}

fn run_round(
    problem: &AbcProblem,
    prior: &Prior,
    proposal: &RoundProposal,
    round: usize,
    n: usize,
    cfg: &AbcConfig,
) -> Result<RoundResult> {
    let t0 = Instant::now();
    let mut rng = stream(derive_seed(cfg.seed, domain::PROPOSAL, round as u64), 0);
    let thetas: Vec<Vec<f64>> = (0..n).map(|_| proposal.density.sample(&mut rng)).collect();
    let log_prior: Vec<f64> = thetas.iter().map(|t| prior.log_density(t)).collect();
    let log_importance: Vec<f64> = thetas
        .iter()
        .zip(&log_prior)
        .map(|(t, lp)| {
            if lp.is_finite() {
                lp - proposal.density.log_density(t)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let stats = run_batch(
        problem,
        &thetas,
        cfg.burn_in,
        derive_seed(cfg.seed, domain::SIMULATION, round as u64),
        cfg.workers,
    )?;
    let simulate_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let weighting = kernel_weights(thetas, stats, &log_importance, problem.s_obs(), cfg.kernel)?;
    Ok(RoundResult {
        weighting,
        log_prior,
        simulate_secs,
        weight_secs: t1.elapsed().as_secs_f64(),
    })
}

/// Kernel ABC importance sampling: one round of `cfg.rounds[0]`.
pub fn kabc_is(problem: &AbcProblem, prior: &Prior, cfg: &AbcConfig) -> Result<AbcOutput> {
    let single = AbcConfig {
        rounds: cfg.rounds[..1.min(cfg.rounds.len())].to_vec(),
        ..cfg.clone()
    };
    kabc_ais(problem, prior, &single)
}

/// Kernel ABC adaptive importance sampling.
///
/// Round t samples from 𝒯_{ν_t}(μ, Σ) where round 1 uses the initial
/// proposal and round t+1 uses the weighted mean of round t and ω_{t+1}
/// times its weighted covariance. The final round's draws are returned.
pub fn kabc_ais(problem: &AbcProblem, prior: &Prior, cfg: &AbcConfig) -> Result<AbcOutput> {
    let p = problem.model().dim();
    cfg.validate(p)?;
    if prior.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: prior.dim(),
        });
    }
    let mut proposal = initial_proposal(problem, prior, cfg)?;
    let mut diagnostics = Vec::with_capacity(cfg.rounds.len());
    let mut history: Vec<(RoundProposal, RoundResult)> = Vec::new();
    for (t, spec) in cfg.rounds.iter().enumerate() {
        let result = run_round(problem, prior, &proposal, t, spec.n, cfg)?;
        let draws = &result.weighting.draws;
        let ess = ess_of(draws.iter().map(|d| d.w));
        diagnostics.push(RoundDiagnostics {
            round: t + 1,
            n: spec.n,
            nu: spec.nu,
            omega: spec.omega,
            proposal_mean: proposal.mean.clone(),
            proposal_scale: proposal.scale.clone(),
            bandwidth: result.weighting.bandwidth,
            ridge: result.weighting.ridge,
            ess,
            posterior_mean: weighted_mean(draws),
            simulate_secs: result.simulate_secs,
            weight_secs: result.weight_secs,
        });
        let floor = (p + 1) as f64;
        if ess < floor {
            return Err(Error::WeightDegeneracy {
                round: t + 1,
                ess,
                floor,
            });
        }
        if let Some(next) = cfg.rounds.get(t + 1) {
            let (mu, cov) = refit(draws, next.omega);
            let next_proposal = student_proposal(mu, cov, next.nu).map_err(|e| match e {
                Error::NotPositiveDefinite(_) => Error::WeightDegeneracy {
                    round: t + 1,
                    ess,
                    floor,
                },
                other => other,
            })?;
            history.push((proposal, result));
            proposal = next_proposal;
        } else {
            history.push((proposal.clone(), result));
        }
    }
    if cfg.retain_previous && history.len() > 1 {
        return pooled_output(problem, &history, cfg, diagnostics);
    }
    let (_, last) = history.pop().expect("at least one round");
    Ok(AbcOutput {
        bandwidth: last.weighting.bandwidth,
        draws: last.weighting.draws,
        s_obs: problem.s_obs().to_vec(),
        rounds: diagnostics,
    })
}

// Deterministic-mixture reweighting: every retained θ is weighted against
// Σ_t (N_t/N) f_t(θ), then all draws are kernel-weighted together.
fn pooled_output(
    problem: &AbcProblem,
    history: &[(RoundProposal, RoundResult)],
    cfg: &AbcConfig,
    diagnostics: Vec<RoundDiagnostics>,
) -> Result<AbcOutput> {
    let total: usize = history.iter().map(|(_, r)| r.weighting.draws.len()).sum();
    let log_mix: Vec<f64> = history
        .iter()
        .map(|(_, r)| (r.weighting.draws.len() as f64 / total as f64).ln())
        .collect();
    let mut thetas = Vec::with_capacity(total);
    let mut stats = Vec::with_capacity(total);
    let mut log_importance = Vec::with_capacity(total);
    for (_, result) in history {
        for (d, lp) in result.weighting.draws.iter().zip(&result.log_prior) {
            let comps: Vec<f64> = history
                .iter()
                .zip(&log_mix)
                .map(|((prop, _), lm)| lm + prop.density.log_density(&d.theta))
                .collect();
            let log_q = crate::sampler::log_sum_exp(&comps);
            log_importance.push(if lp.is_finite() { lp - log_q } else { f64::NEG_INFINITY });
            thetas.push(d.theta.clone());
            stats.push(d.stats.clone());
        }
    }
    let weighting = kernel_weights(thetas, stats, &log_importance, problem.s_obs(), cfg.kernel)?;
    Ok(AbcOutput {
        bandwidth: weighting.bandwidth,
        draws: weighting.draws,
        s_obs: problem.s_obs().to_vec(),
        rounds: diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_stats::GaussianPrior;

    #[test]
    fn hand_computed_two_draw_weights() {
        // stats 0 and 2 around s_obs = 1: W = 1, d = 1 for both, so kernel
        // weights are equal and w ∝ w_I = (1, 3)
        let out = kernel_weights(
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.0], vec![2.0]],
            &[0.0, 3f64.ln()],
            &[1.0],
            KernelMode::Constant,
        )
        .unwrap();
        assert!((out.draws[0].w - 0.25).abs() < 1e-15);
        assert!((out.draws[1].w - 0.75).abs() < 1e-15);
        assert!((out.draws[1].w_importance - 3.0).abs() < 1e-14);
    }

    #[test]
    fn hand_computed_kernel_weights() {
        // stats {0, 1, 3}, s_obs = 0: mean 4/3, W = 14/9, quadratic form (0, 9/14, 81/14)
        let q = [0.0, 9.0 / 14.0, 81.0 / 14.0];
        let root = q.map(f64::sqrt);
        for (mode, d) in [(KernelMode::Gaussian, root), (KernelMode::GaussianQuadratic, q)] {
            let out = kernel_weights(
                vec![vec![0.0], vec![1.0], vec![2.0]],
                vec![vec![0.0], vec![1.0], vec![3.0]],
                &[0.0, 0.0, 0.0],
                &[0.0],
                mode,
            )
            .unwrap();
            let h = silverman_bandwidth(&d).unwrap();
            let k: Vec<f64> = d.iter().map(|x| (-x * x / (2.0 * h * h)).exp()).collect();
            let total: f64 = k.iter().sum();
            for (draw, kk) in out.draws.iter().zip(&k) {
                assert!((draw.w - kk / total).abs() < 1e-14);
                assert!((draw.w_kernel - kk).abs() < 1e-14);
            }
            assert!((out.bandwidth - h).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight_everywhere_is_an_error() {
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 3]).is_err());
    }

    #[test]
    fn empty_batch_is_empty() {
        let g = Graph::empty(5, false);
        let problem =
            AbcProblem::new(g, ModelSpec::parse("edges").unwrap(), None, ProposalKind::Tnt).unwrap();
        assert!(run_batch(&problem, &[], 10, 1, 1).unwrap().is_empty());
        assert!(run_batch(&problem, &[vec![0.0, 1.0]], 10, 1, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = AbcConfig::single(2, 10, 1);
        assert!(cfg.validate(2).is_err());
        assert!(AbcConfig::adaptive(&[10, 20], &[4.0], &[4.0, 2.0], 10, 1).is_err());
        let cfg = AbcConfig::adaptive(&[10, 20], &[4.0, 4.0], &[4.0, 0.0], 10, 1).unwrap();
        assert!(cfg.validate(2).is_err());
    }

    #[test]
    fn separation_propagates_from_mple() {
        let g = Graph::empty(6, false);
        let problem =
            AbcProblem::new(g, ModelSpec::parse("edges").unwrap(), None, ProposalKind::Tnt).unwrap();
        let prior = Prior::Gaussian(GaussianPrior::isotropic(vec![0.0], 1.0).unwrap());
        let err = kabc_is(&problem, &prior, &AbcConfig::single(50, 10, 1)).unwrap_err();
        assert!(matches!(err, Error::MpleSeparation));
    }
}
