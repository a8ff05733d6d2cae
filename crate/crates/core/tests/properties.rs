use std::collections::BTreeSet;

use ergm_kabc::abc::normalize_log_weights;
use ergm_kabc::graph::{AttrColumn, Dyad, Graph, NodeAttributes};
use ergm_kabc::kernel_stats::{
    empirical_cov, mahalanobis_sq, silverman_bandwidth, GaussianPrior, ProposalT,
};
use ergm_kabc::model::{
    apply_transform, change_stats, compute_stats, ModelSpec, StatVector, SummarySpec, Term,
    Transform,
};
use ergm_kabc::mple::build_design;
use ergm_kabc::posterior::{ess, marginal_cdf, quantile, WeightedDraw};
use ergm_kabc::sampler::tnt_hastings_ratio;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::distribution::{Continuous, StudentsT};

/// (n, edge set, categorical attribute codes)
fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<u8>)> {
    (3usize..10).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::sample::subsequence(pairs, 0..=m),
            proptest::collection::vec(0u8..3, n),
        )
    })
}

fn build(n: usize, edges: &[(usize, usize)], codes: &[u8]) -> Graph {
    let mut attrs = NodeAttributes::new(n);
    attrs
        .insert(
            "grp",
            AttrColumn::Categorical(codes.iter().map(|c| c.to_string()).collect()),
        )
        .unwrap();
    let dyads: Vec<Dyad> = edges.iter().map(|&(i, j)| Dyad::new(i, j)).collect();
    Graph::from_edge_list(n, false, &dyads, Some(attrs)).unwrap()
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; n]; n];
    for &(i, j) in edges {
        a[i][j] = true;
        a[j][i] = true;
    }
    a
}

// Brute-force statistics straight from the adjacency matrix.
fn oracle_stats(n: usize, edges: &[(usize, usize)], codes: &[u8], decay: f64) -> Vec<f64> {
    let a = adjacency(n, edges);
    let mut tri = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if a[i][j] && a[j][k] && a[i][k] {
                    tri += 1.0;
                }
            }
        }
    }
    let nodematch = edges.iter().filter(|&&(i, j)| codes[i] == codes[j]).count() as f64;
    let mut gwesp = 0.0;
    for &(i, j) in edges {
        let sp = (0..n).filter(|&k| a[i][k] && a[j][k]).count() as i32;
        gwesp += decay.exp() * (1.0 - (1.0 - (-decay).exp()).powi(sp));
    }
    vec![edges.len() as f64, nodematch, tri, gwesp]
}

fn full_model(decay: f64) -> ModelSpec {
    ModelSpec::new(vec![
        Term::Edges,
        Term::NodeMatch("grp".into()),
        Term::Triangle,
        Term::Gwesp(decay),
    ])
    .unwrap()
}

fn draws_from(values: &[f64], weights: &[f64]) -> Vec<WeightedDraw> {
    let total: f64 = weights.iter().sum();
    values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| WeightedDraw {
            theta: vec![v],
            stats: vec![],
            w_importance: 1.0,
            w_kernel: 1.0,
            w: w / total,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn statistics_match_brute_force((n, edges, codes) in arb_graph(), decay in 0.0f64..2.0) {
        let g = build(n, &edges, &codes);
        let got = compute_stats(&g, &full_model(decay)).unwrap();
        let want = oracle_stats(n, &edges, &codes, decay);
        prop_assert_eq!(got[0], want[0]);
        prop_assert_eq!(got[1], want[1]);
        prop_assert_eq!(got[2], want[2]);
        prop_assert!((got[3] - want[3]).abs() < 1e-9);
    }

    #[test]
    fn change_statistics_match_toggled_difference(
        (n, edges, codes) in arb_graph(),
        decay in 0.0f64..2.0,
        pick in any::<(usize, usize)>(),
    ) {
        let i = pick.0 % n;
        let j = (i + 1 + pick.1 % (n - 1)) % n;
        let g = build(n, &edges, &codes);
        let delta = change_stats(&g, &full_model(decay), Dyad::undirected(i, j)).unwrap();

        let (a, b) = (i.min(j), i.max(j));
        let mut with: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        with.insert((a, b));
        let mut without = with.clone();
        without.remove(&(a, b));
        let with: Vec<_> = with.into_iter().collect();
        let without: Vec<_> = without.into_iter().collect();
        let hi = oracle_stats(n, &with, &codes, decay);
        let lo = oracle_stats(n, &without, &codes, decay);
        for k in 0..3 {
            prop_assert_eq!(delta[k], hi[k] - lo[k]);
        }
        prop_assert!((delta[3] - (hi[3] - lo[3])).abs() < 1e-9);
    }

    #[test]
    fn sqrt_transform_is_monotone(u in 0.0f64..1e6, v in 0.0f64..1e6) {
        let spec = SummarySpec::parse("edges").unwrap().with_transform_all(Transform::Sqrt1p);
        let a = apply_transform(&StatVector(vec![u]), &spec).unwrap();
        let b = apply_transform(&StatVector(vec![v]), &spec).unwrap();
        prop_assert!((a[0] - (u + 1.0).sqrt()).abs() < 1e-12);
        prop_assert_eq!(u <= v, a[0] <= b[0]);
    }

    #[test]
    fn tnt_ratio_balances_forward_and_reverse(edges in 0usize..50, extra in 1usize..50) {
        let dyads = edges + extra;
        // adding an edge from `edges` and removing it again from `edges + 1`
        let forward = tnt_hastings_ratio(edges, dyads, true);
        let back = tnt_hastings_ratio(edges + 1, dyads, false);
        prop_assert!((forward * back - 1.0).abs() < 1e-12);
        // both urns non-empty on each side: the 1/2 urn choices cancel
        if edges > 0 && edges + 1 < dyads {
            let want = (dyads - edges) as f64 / (edges + 1) as f64;
            prop_assert!((forward - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn mple_derivatives_match_finite_differences(
        (n, edges, codes) in arb_graph(),
        theta in proptest::collection::vec(-1.5f64..1.5, 3),
    ) {
        let spec = ModelSpec::new(vec![Term::Edges, Term::NodeMatch("grp".into()), Term::Gwesp(0.5)]).unwrap();
        let design = build_design(&build(n, &edges, &codes), &spec).unwrap();
        let grad = design.gradient(&theta);
        let info = design.information(&theta);
        let eps = 1e-5;
        for k in 0..3 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[k] += eps;
            dn[k] -= eps;
            let fd = (design.log_pseudolikelihood(&up) - design.log_pseudolikelihood(&dn)) / (2.0 * eps);
            prop_assert!((fd - grad[k]).abs() <= 1e-5 * grad[k].abs().max(1.0));
            let dg = (design.gradient(&up) - design.gradient(&dn)) / (2.0 * eps);
            for r in 0..3 {
                prop_assert!((-dg[r] - info[(r, k)]).abs() <= 1e-5 * info[(r, k)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn weights_normalize_and_ignore_shifts(
        log_w in proptest::collection::vec(-700.0f64..700.0, 1..200),
        shift in -500.0f64..500.0,
    ) {
        let w = normalize_log_weights(&log_w).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = log_w.iter().map(|x| x + shift).collect();
        let w2 = normalize_log_weights(&shifted).unwrap();
        for (a, b) in w.iter().zip(&w2) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn ess_is_between_one_and_n(weights in proptest::collection::vec(1e-6f64..1.0, 1..300)) {
        let values: Vec<f64> = (0..weights.len()).map(|i| i as f64).collect();
        let e = ess(&draws_from(&values, &weights));
        prop_assert!(e >= 1.0 - 1e-9 && e <= weights.len() as f64 + 1e-9);
    }

    #[test]
    fn smoothed_cdf_and_quantiles_are_monotone(
        pairs in proptest::collection::vec((-10.0f64..10.0, 1e-3f64..1.0), 3..80),
        levels in proptest::collection::vec(0.001f64..0.999, 2..10),
    ) {
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
        prop_assume!(distinct.len() >= 3);
        let draws = draws_from(&values, &weights);
        let cdf = marginal_cdf(&draws, 0).unwrap();
        let (lo, hi) = cdf.domain();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let t = lo - 1.0 + (hi - lo + 2.0) * k as f64 / 400.0;
            let f = cdf.eval(t);
            prop_assert!(f >= prev - 1e-15);
            prop_assert!((0.0..=1.0).contains(&f));
            prev = f;
        }
        let mut sorted = levels.clone();
        sorted.sort_by(f64::total_cmp);
        let qs: Vec<f64> = sorted.iter().map(|&q| quantile(&draws, 0, q).unwrap()).collect();
        prop_assert!(qs.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn silverman_is_scale_homogeneous(
        d in proptest::collection::vec(0.0f64..100.0, 5..200),
        c in 1e-3f64..1e3,
    ) {
        let sd_positive = d.iter().any(|&x| (x - d[0]).abs() > 1e-6);
        prop_assume!(sd_positive);
        let h = silverman_bandwidth(&d).unwrap();
        let scaled: Vec<f64> = d.iter().map(|x| c * x).collect();
        let hc = silverman_bandwidth(&scaled).unwrap();
        prop_assert!((hc - c * h).abs() <= 1e-9 * (c * h).max(1e-300));
    }

    #[test]
    fn mahalanobis_invariant_under_linear_maps(
        samples in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 10..40),
        s_obs in proptest::collection::vec(-5.0f64..5.0, 3),
        a in proptest::collection::vec(-1.0f64..1.0, 9),
    ) {
        let w = empirical_cov(&samples).unwrap();
        prop_assume!(w.determinant() > 1e-3);
        // diagonally dominant, hence invertible
        let mut m = DMatrix::from_row_slice(3, 3, &a);
        for k in 0..3 {
            m[(k, k)] += 4.0;
        }
        let map = |v: &[f64]| -> Vec<f64> { (&m * DVector::from_column_slice(v)).iter().copied().collect() };
        let mapped: Vec<Vec<f64>> = samples.iter().map(|s| map(s)).collect();
        let w2 = empirical_cov(&mapped).unwrap();
        for s in samples.iter().take(5) {
            let d1 = mahalanobis_sq(s, &s_obs, &w).unwrap();
            let d2 = mahalanobis_sq(&map(s), &map(&s_obs), &w2).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-8 * d1.max(1.0));
        }
    }

    #[test]
    fn univariate_student_t_matches_closed_form(
        mu in -5.0f64..5.0,
        scale2 in 0.01f64..25.0,
        nu in 0.5f64..50.0,
        x in -20.0f64..20.0,
    ) {
        let t = ProposalT::new(vec![mu], DMatrix::from_element(1, 1, scale2), nu).unwrap();
        let oracle = StudentsT::new(mu, scale2.sqrt(), nu).unwrap().ln_pdf(x);
        prop_assert!((t.logpdf(&[x]) - oracle).abs() < 1e-9);
    }

    #[test]
    fn multivariate_densities_match_direct_inverse(
        mu in proptest::collection::vec(-3.0f64..3.0, 3),
        a in proptest::collection::vec(-1.0f64..1.0, 9),
        x in proptest::collection::vec(-6.0f64..6.0, 3),
        nu in 1.0f64..30.0,
    ) {
        let l = DMatrix::from_row_slice(3, 3, &a);
        let sigma = &l * l.transpose() + DMatrix::identity(3, 3) * 0.5;
        let inv = sigma.clone().try_inverse().unwrap();
        let det = sigma.determinant();
        let diff = DVector::from_column_slice(&x) - DVector::from_column_slice(&mu);
        let q = (diff.transpose() * &inv * &diff)[(0, 0)];
        let p = 3.0;
        let ln_pi = std::f64::consts::PI.ln();

        let gauss = -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + det.ln() + q);
        let prior = GaussianPrior::new(mu.clone(), sigma.clone()).unwrap();
        prop_assert!((prior.logpdf(&x) - gauss).abs() < 1e-9);

        let lg = statrs::function::gamma::ln_gamma;
        let student = lg((nu + p) / 2.0) - lg(nu / 2.0) - 0.5 * p * (nu.ln() + ln_pi)
            - 0.5 * det.ln() - 0.5 * (nu + p) * (1.0 + q / nu).ln();
        let t = ProposalT::new(mu, sigma, nu).unwrap();
        prop_assert!((t.logpdf(&x) - student).abs() < 1e-9);
    }
}
