//! Statistical checks against quantities known in closed form or by
//! enumeration.

use ergm_kabc::abc::{
    kabc_ais, kabc_is, rabc, run_batch, AbcConfig, AbcProblem, InitialProposal, KernelMode,
    RejectionConfig, Threshold,
};
use ergm_kabc::aea::{aea_run, AeaConfig};
use ergm_kabc::bench::{karate_graph, karate_model};
use ergm_kabc::graph::{Dyad, Graph};
use ergm_kabc::kernel_stats::{GaussianPrior, Prior};
use ergm_kabc::model::{compute_stats, ModelSpec};
use ergm_kabc::mple::fit_mple;
use ergm_kabc::posterior::weighted_mean;
use ergm_kabc::rng::stream;
use ergm_kabc::sampler::{exact_enumerate, ProposalKind, Sampler};
use statrs::distribution::{ContinuousCDF, Normal};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn small_graph() -> Graph {
    let edges = [Dyad::new(0, 1), Dyad::new(1, 2), Dyad::new(2, 3), Dyad::new(0, 2)];
    Graph::from_edge_list(5, false, &edges, None).unwrap()
}

#[test]
fn edges_only_partition_function_is_binomial() {
    let spec = ModelSpec::parse("edges").unwrap();
    for &theta in &[-2.0, -0.3, 0.0, 1.7] {
        let m = exact_enumerate(5, &spec, &[theta]).unwrap();
        let dyads = 10.0;
        assert!((m.log_partition - dyads * (1.0 + f64::exp(theta)).ln()).abs() < 1e-10);
        assert!((m.expected_stats[0] - dyads * logistic(theta)).abs() < 1e-10);
    }
}

#[test]
fn edges_only_mple_is_logit_of_density() {
    let g = karate_graph();
    let fit = fit_mple(&g, &ModelSpec::parse("edges").unwrap()).unwrap();
    let density = g.edge_count() as f64 / g.dyad_count() as f64;
    assert!((fit.theta_hat[0] - (density / (1.0 - density)).ln()).abs() < 1e-10);
    let var = 1.0 / (g.dyad_count() as f64 * density * (1.0 - density));
    assert!((fit.neg_hessian_inverse[0][0] - var).abs() < 1e-10);
}

// Long-run averages of the chain must reproduce the enumerated moments.
fn check_sampler(kind: ProposalKind) {
    let spec = ModelSpec::parse("edges, triangle").unwrap();
    let theta = [-0.4, 0.3];
    let exact = exact_enumerate(5, &spec, &theta).unwrap();
    let g0 = small_graph();
    let sampler = Sampler::new(&spec, &g0, kind).unwrap();
    let mut g = g0.clone();
    let mut rng = stream(42, 0);
    sampler.run(&mut g, &theta, 2_000, &mut rng);
    let (keep, thin) = (100_000, 5);
    let mut acc = [0.0; 2];
    for _ in 0..keep {
        sampler.run(&mut g, &theta, thin, &mut rng);
        let s = compute_stats(&g, &spec).unwrap();
        acc[0] += s[0];
        acc[1] += s[1];
    }
    for k in 0..2 {
        let mean = acc[k] / keep as f64;
        // generous against autocorrelated Monte Carlo error (sd of edges ≈ 1.6)
        assert!(
            (mean - exact.expected_stats[k]).abs() < 0.06,
            "{:?} stat {}: chain {} vs exact {}",
            kind,
            k,
            mean,
            exact.expected_stats[k]
        );
    }
}

#[test]
fn tnt_chain_targets_the_ergm() {
    check_sampler(ProposalKind::Tnt);
}

#[test]
fn uniform_chain_targets_the_ergm() {
    check_sampler(ProposalKind::UniformDyad);
}

fn karate_problem() -> AbcProblem {
    AbcProblem::new(karate_graph(), karate_model(), None, ProposalKind::Tnt).unwrap()
}

#[test]
fn constant_kernel_with_prior_proposal_recovers_the_prior() {
    let problem = karate_problem();
    let prior = Prior::Gaussian(GaussianPrior::isotropic(vec![-1.0, 0.5], 0.25).unwrap());
    let mut cfg = AbcConfig::single(4000, 50, 9);
    cfg.initial = InitialProposal::Prior;
    cfg.kernel = KernelMode::Constant;
    let out = kabc_is(&problem, &prior, &cfg).unwrap();
    assert!(out.draws.iter().all(|d| d.w_importance == 1.0));
    let mean = weighted_mean(&out.draws);
    // sd of the mean ≈ 0.5 / √4000 ≈ 0.008
    assert!((mean[0] + 1.0).abs() < 0.04, "{:?}", mean);
    assert!((mean[1] - 0.5).abs() < 0.04, "{:?}", mean);
}

#[test]
fn one_adaptive_round_is_importance_sampling() {
    let problem = karate_problem();
    let prior = Prior::Gaussian(GaussianPrior::isotropic(vec![0.0, 0.0], 100.0).unwrap());
    let is = kabc_is(&problem, &prior, &AbcConfig::single(400, 200, 5)).unwrap();
    let ais = kabc_ais(&problem, &prior, &AbcConfig::adaptive(&[400], &[4.0], &[4.0], 200, 5).unwrap()).unwrap();
    assert_eq!(is.draws, ais.draws);
    assert_eq!(is.bandwidth, ais.bandwidth);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let problem = karate_problem();
    let thetas: Vec<Vec<f64>> = (0..40).map(|i| vec![-3.0 + 0.01 * i as f64, 1.0]).collect();
    let a = run_batch(&problem, &thetas, 500, 3, 1).unwrap();
    let b = run_batch(&problem, &thetas, 500, 3, 3).unwrap();
    assert_eq!(a, b);

    let prior = Prior::Gaussian(GaussianPrior::isotropic(vec![0.0, 0.0], 100.0).unwrap());
    let mut cfg = AbcConfig::adaptive(&[200, 300], &[4.0, 4.0], &[4.0, 2.0], 300, 8).unwrap();
    cfg.workers = 1;
    let one = kabc_ais(&problem, &prior, &cfg).unwrap();
    cfg.workers = 4;
    let four = kabc_ais(&problem, &prior, &cfg).unwrap();
    assert_eq!(one.draws, four.draws);

    let mut aea = AeaConfig::new(5, 10, 300, 2);
    aea.n_chains = Some(4);
    aea.workers = 1;
    let c1 = aea_run(&karate_graph(), &karate_model(), &prior, &aea).unwrap();
    aea.workers = 3;
    let c3 = aea_run(&karate_graph(), &karate_model(), &prior, &aea).unwrap();
    assert_eq!(c1.chains, c3.chains);
}

// Kolmogorov-Smirnov statistic against a normal CDF.
fn ks_statistic(mut xs: Vec<f64>, dist: &Normal) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn infinite_threshold_rejection_returns_the_prior() {
    let problem = karate_problem();
    let prior = Prior::Gaussian(GaussianPrior::isotropic(vec![-2.0, 0.5], 0.04).unwrap());
    let mut cfg = RejectionConfig::new(2000, 20, 4);
    cfg.threshold = Threshold::Fixed(f64::INFINITY);
    cfg.pilot_size = 0;
    let out = rabc(&problem, &prior, &cfg).unwrap();
    assert_eq!(out.thetas.len(), 2000);
    assert_eq!(out.acceptance_rate, 1.0);
    // 1% critical value of the one-sample KS statistic is ≈ 1.63 / √n
    let crit = 1.63 / (2000f64).sqrt();
    for (k, mu) in [-2.0, 0.5].into_iter().enumerate() {
        let xs = out.thetas.iter().map(|t| t[k]).collect();
        let d = ks_statistic(xs, &Normal::new(mu, 0.2).unwrap());
        assert!(d < crit, "coordinate {}: KS {} ≥ {}", k, d, crit);
    }
}

#[test]
fn zero_threshold_on_continuous_summaries_hits_the_floor() {
    let problem = AbcProblem::new(
        karate_graph(),
        ModelSpec::parse("edges, gwesp:0.2").unwrap(),
        Some(ergm_kabc::model::SummarySpec::parse("edges, gwesp:0.2").unwrap()),
        ProposalKind::Tnt,
    )
    .unwrap();
    let prior = Prior::Gaussian(GaussianPrior::isotropic(vec![0.0, 0.0], 100.0).unwrap());
    let mut cfg = RejectionConfig::new(10, 2000, 1);
    cfg.threshold = Threshold::Fixed(0.0);
    cfg.pilot_size = 0;
    cfg.min_acceptance = 0.05;
    assert!(rabc(&problem, &prior, &cfg).is_err());
}
