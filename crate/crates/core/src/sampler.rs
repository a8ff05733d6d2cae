//! Metropolis-Hastings simulation of ERGMs with single-dyad toggles, plus
//! exact enumeration for tiny graphs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Dyad, Graph};
use crate::model::{dot, BoundTerms, ModelSpec};

/// Largest node count accepted by [`exact_enumerate`] (2^15 graphs).
pub const MAX_ENUMERATION_NODES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProposalKind {
    /// Toggle a dyad chosen uniformly at random.
    UniformDyad,
    /// Tie/no-tie: pick the edge set or the null set with probability 1/2,
    /// then a dyad uniformly within it.
    #[default]
    Tnt,
}

impl FromStr for ProposalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uniformdyad" => Ok(ProposalKind::UniformDyad),
            "tnt" => Ok(ProposalKind::Tnt),
            other => Err(Error::Config(format!(
                "unknown proposal `{}` (expected uniform or tnt)",
                other
            ))),
        }
    }
}

impl fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProposalKind::UniformDyad => write!(f, "uniform"),
            ProposalKind::Tnt => write!(f, "tnt"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartState {
    #[default]
    Observed,
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub burn_in: u64,
    pub proposal: ProposalKind,
    pub start: StartState,
}

impl SimConfig {
    /// B = 2n², TNT proposals, starting from the observed graph.
    pub fn default_for(n: usize) -> Self {
        SimConfig {
            burn_in: default_burn_in(n),
            proposal: ProposalKind::Tnt,
            start: StartState::Observed,
        }
    }
}

pub fn default_burn_in(n: usize) -> u64 {
    2 * (n as u64) * (n as u64)
}

/// A single-dyad move and its log proposal ratio log q(y|y') − log q(y'|y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub dyad: Dyad,
    pub adding: bool,
    pub log_q_ratio: f64,
}

fn random_dyad<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Dyad {
    let n = g.node_count();
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    g.canonical(i, j)
}

fn random_null_dyad<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Dyad {
    loop {
        let d = random_dyad(g, rng);
        if !g.has_edge(d.i, d.j) {
            return d;
        }
    }
}

/// Hastings ratio q(y|y')/q(y'|y) of a TNT move on a graph with `edges`
/// edges out of `dyads` dyads.
///
/// Each urn is chosen with probability 1/2 when both are non-empty and with
/// probability 1 when the other is empty.
pub fn tnt_hastings_ratio(edges: usize, dyads: usize, adding: bool) -> f64 {
    let urn = |e: usize, d: usize, want_edge: bool| -> f64 {
        let other_empty = if want_edge { e == d } else { e == 0 };
        if other_empty {
            1.0
        } else {
            0.5
        }
    };
    let (e, d) = (edges as f64, dyads as f64);
    if adding {
        let forward = urn(edges, dyads, false) / (d - e);
        let back = urn(edges + 1, dyads, true) / (e + 1.0);
        back / forward
    } else {
        let forward = urn(edges, dyads, true) / e;
        let back = urn(edges - 1, dyads, false) / (d - e + 1.0);
        back / forward
    }
}

/// Draw one proposed toggle; `None` when the graph has no dyads.
pub fn propose<R: Rng + ?Sized>(g: &Graph, kind: ProposalKind, rng: &mut R) -> Option<Move> {
    let dyads = g.dyad_count();
    if dyads == 0 {
        return None;
    }
    match kind {
        ProposalKind::UniformDyad => {
            let d = random_dyad(g, rng);
            Some(Move {
                dyad: d,
                adding: !g.has_edge(d.i, d.j),
                log_q_ratio: 0.0,
            })
        }
        ProposalKind::Tnt => {
            let edges = g.edge_count();
            let pick_edge = if edges == 0 {
                false
            } else if edges == dyads {
                true
            } else {
                rng.random::<bool>()
            };
            let (dyad, adding) = if pick_edge {
                (g.edge_at(rng.random_range(0..edges)), false)
            } else {
                (random_null_dyad(g, rng), true)
            };
            Some(Move {
                dyad,
                adding,
                log_q_ratio: tnt_hastings_ratio(edges, dyads, adding).ln(),
            })
        }
    }
}

/// MH simulator for one model bound to a graph's attributes.
#[derive(Debug, Clone)]
pub struct Sampler {
    terms: BoundTerms,
    proposal: ProposalKind,
}

impl Sampler {
    pub fn new(spec: &ModelSpec, template: &Graph, proposal: ProposalKind) -> Result<Self> {
        Ok(Sampler {
            terms: BoundTerms::bind(spec.terms(), template)?,
            proposal,
        })
    }

    pub fn terms(&self) -> &BoundTerms {
        &self.terms
    }

    pub fn proposal(&self) -> ProposalKind {
        self.proposal
    }

    /// One MH step. `scratch` must have the model dimension. When `stats` is
    /// given it is updated by the accepted change.
    pub fn step<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        theta: &[f64],
        rng: &mut R,
        scratch: &mut [f64],
        stats: Option<&mut [f64]>,
    ) -> bool {
        let Some(mv) = propose(g, self.proposal, rng) else {
            return false;
        };
        self.terms.change(g, mv.dyad, scratch);
        let sign = if mv.adding { 1.0 } else { -1.0 };
        let log_alpha = mv.log_q_ratio + sign * dot(theta, scratch);
        let accept = log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha;
        if accept {
            g.toggle(mv.dyad);
            if let Some(stats) = stats {
                for (s, c) in stats.iter_mut().zip(scratch.iter()) {
                    *s += sign * c;
                }
            }
        }
        accept
    }

    /// Run `steps` MH steps in place; returns the number accepted.
    pub fn run<R: Rng + ?Sized>(&self, g: &mut Graph, theta: &[f64], steps: u64, rng: &mut R) -> u64 {
        let mut scratch = vec![0.0; self.terms.dim()];
        let mut accepted = 0;
        for _ in 0..steps {
            accepted += self.step(g, theta, rng, &mut scratch, None) as u64;
        }
        accepted
    }

    /// Run `steps` MH steps tracking g(y) incrementally from `stats`.
    pub fn run_tracking<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        theta: &[f64],
        steps: u64,
        rng: &mut R,
        stats: &mut [f64],
    ) -> u64 {
        let mut scratch = vec![0.0; self.terms.dim()];
        let mut accepted = 0;
        for _ in 0..steps {
            accepted += self.step(g, theta, rng, &mut scratch, Some(&mut *stats)) as u64;
        }
        #[cfg(debug_assertions)]
        {
            let full = self.terms.stats(g);
            for (a, b) in full.iter().zip(stats.iter()) {
                debug_assert!(
                    (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                    "incremental statistics drifted: {:?} vs {:?}",
                    stats,
                    full
                );
            }
        }
        accepted
    }
}

/// One MH step on `g` under θ.
pub fn mh_step<R: Rng + ?Sized>(
    g: &mut Graph,
    theta: &[f64],
    spec: &ModelSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<bool> {
    check_dim(spec, theta)?;
    let sampler = Sampler::new(spec, g, cfg.proposal)?;
    let mut scratch = vec![0.0; spec.dim()];
    Ok(sampler.step(g, theta, rng, &mut scratch, None))
}

/// The state after exactly `cfg.burn_in` MH steps from the configured start.
pub fn simulate<R: Rng + ?Sized>(
    g0: &Graph,
    theta: &[f64],
    spec: &ModelSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Graph> {
    check_dim(spec, theta)?;
    let sampler = Sampler::new(spec, g0, cfg.proposal)?;
    let mut g = start_graph(g0, cfg.start);
    sampler.run(&mut g, theta, cfg.burn_in, rng);
    Ok(g)
}

pub(crate) fn start_graph(g0: &Graph, start: StartState) -> Graph {
    match start {
        StartState::Observed => g0.clone(),
        StartState::Empty => {
            let mut g = Graph::empty(g0.node_count(), g0.is_directed());
            g.set_attributes(g0.attributes().clone())
                .expect("attribute table matches node count");
            g
        }
    }
}

fn check_dim(spec: &ModelSpec, theta: &[f64]) -> Result<()> {
    if spec.dim() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Distinct statistic vectors over every graph on the template's node set,
/// with multiplicities.
#[derive(Debug, Clone)]
pub struct StatCensus {
    pub stats: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
}

impl StatCensus {
    pub fn enumerate(template: &Graph, spec: &ModelSpec) -> Result<Self> {
        let n = template.node_count();
        if n > MAX_ENUMERATION_NODES {
            return Err(Error::EnumerationTooLarge {
                n,
                max: MAX_ENUMERATION_NODES,
            });
        }
        let terms = BoundTerms::bind(spec.terms(), template)?;
        let mut dyads = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                dyads.push(Dyad::new(i, j));
            }
        }
        let mut g = start_graph(template, StartState::Empty);
        let mut census: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
        let total: u64 = 1 << dyads.len();
        // Gray-code order: graph k differs from k-1 in exactly one dyad
        for k in 0..total {
            if k > 0 {
                g.toggle(dyads[k.trailing_zeros() as usize]);
            }
            let s = terms.stats(&g);
            let key = s.iter().map(|x| x.to_bits()).collect();
            *census.entry(key).or_insert(0) += 1;
        }
        let (stats, counts) = census
            .into_iter()
            .map(|(k, c)| (k.into_iter().map(f64::from_bits).collect(), c))
            .unzip();
        Ok(StatCensus { stats, counts })
    }

    /// ψ(θ) = log Σ_y exp{θᵀ g(y)}.
    pub fn log_partition(&self, theta: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .stats
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| (c as f64).ln() + dot(theta, s))
            .collect();
        log_sum_exp(&terms)
    }

    /// Probability of each distinct statistic vector under θ.
    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        let psi = self.log_partition(theta);
        self.stats
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| ((c as f64).ln() + dot(theta, s) - psi).exp())
            .collect()
    }

    /// E_θ[g(Y)].
    pub fn expectation(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.probabilities(theta);
        let dim = self.stats.first().map_or(0, Vec::len);
        let mut out = vec![0.0; dim];
        for (s, pk) in self.stats.iter().zip(p) {
            for (o, x) in out.iter_mut().zip(s) {
                *o += pk * x;
            }
        }
        out
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    pub log_partition: f64,
    pub expected_stats: Vec<f64>,
}

/// Exact ψ(θ) and E_θ[g(Y)] by enumerating all graphs on `n` nodes.
pub fn exact_enumerate(n: usize, spec: &ModelSpec, theta: &[f64]) -> Result<ExactMoments> {
    check_dim(spec, theta)?;
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::EnumerationTooLarge {
            n,
            max: MAX_ENUMERATION_NODES,
        });
    }
    let census = StatCensus::enumerate(&Graph::empty(n, false), spec)?;
    Ok(ExactMoments {
        log_partition: census.log_partition(theta),
        expected_stats: census.expectation(theta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn tnt_ratio_matches_closed_forms() {
        let (e, d) = (5usize, 15usize);
        let off = tnt_hastings_ratio(e, d, false);
        assert!((off - e as f64 / (d - e + 1) as f64).abs() < 1e-15);
        let on = tnt_hastings_ratio(e, d, true);
        assert!((on - (d - e) as f64 / (e + 1) as f64).abs() < 1e-15);
        // empty graph: forced null urn, the reverse picks the edge urn w.p. 1/2
        assert!((tnt_hastings_ratio(0, 6, true) - 0.5 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_burn_in_returns_start() {
        let g = Graph::from_edge_list(4, false, &[Dyad::new(0, 1)], None).unwrap();
        let spec = ModelSpec::parse("edges").unwrap();
        let cfg = SimConfig {
            burn_in: 0,
            ..SimConfig::default_for(4)
        };
        let out = simulate(&g, &[0.3], &spec, &cfg, &mut stream(1, 0)).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn theta_zero_uniform_always_accepts() {
        let mut g = Graph::empty(6, false);
        let spec = ModelSpec::parse("edges, triangle").unwrap();
        let cfg = SimConfig {
            burn_in: 0,
            proposal: ProposalKind::UniformDyad,
            start: StartState::Observed,
        };
        let mut rng = stream(3, 0);
        for _ in 0..200 {
            assert!(mh_step(&mut g, &[0.0, 0.0], &spec, &cfg, &mut rng).unwrap());
        }
    }

    #[test]
    fn enumeration_fair_coin_and_biased() {
        let spec = ModelSpec::parse("edges").unwrap();
        let m = exact_enumerate(3, &spec, &[0.0]).unwrap();
        assert!((m.log_partition - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((m.expected_stats[0] - 1.5).abs() < 1e-12);
        let m = exact_enumerate(3, &spec, &[3f64.ln()]).unwrap();
        assert!((m.expected_stats[0] - 2.25).abs() < 1e-12);
        assert!(matches!(
            exact_enumerate(7, &spec, &[0.0]),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let g = Graph::empty(10, false);
        let spec = ModelSpec::parse("edges, gwesp:0.5").unwrap();
        let cfg = SimConfig::default_for(10);
        let a = simulate(&g, &[-1.0, 0.3], &spec, &cfg, &mut stream(9, 2)).unwrap();
        let b = simulate(&g, &[-1.0, 0.3], &spec, &cfg, &mut stream(9, 2)).unwrap();
        assert_eq!(a.sorted_edges(), b.sorted_edges());
    }
}
