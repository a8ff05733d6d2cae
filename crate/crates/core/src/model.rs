//! ERGM statistic terms, full statistic vectors and change statistics.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Dyad, Graph};

/// One sufficient-statistic term.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Number of edges.
    Edges,
    /// Number of edges whose endpoints share the value of the named attribute.
    NodeMatch(String),
    /// Geometrically weighted edgewise shared partners with fixed decay.
    Gwesp(f64),
    /// Number of triangles.
    Triangle,
}

impl Term {
    fn validate(&self) -> Result<()> {
        match self {
            Term::Gwesp(decay) if !decay.is_finite() || *decay < 0.0 => Err(Error::Config(
                format!("gwesp decay must be finite and non-negative, got {}", decay),
            )),
            Term::NodeMatch(name) if name.is_empty() => {
                Err(Error::Config("nodematch requires an attribute name".into()))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let term = match (head.to_ascii_lowercase().as_str(), arg) {
            ("edges", None) => Term::Edges,
            ("triangle", None) | ("triangles", None) => Term::Triangle,
            ("nodematch", Some(attr)) => Term::NodeMatch(attr.to_owned()),
            ("gwesp", Some(decay)) => Term::Gwesp(decay.parse().map_err(|_| {
                Error::Config(format!("gwesp decay `{}` is not a number", decay))
            })?),
            ("gwesp", None) => {
                return Err(Error::Config(
                    "gwesp requires a fixed decay, e.g. `gwesp:0.5`".into(),
                ))
            }
            ("nodematch", None) => {
                return Err(Error::Config(
                    "nodematch requires an attribute, e.g. `nodematch:grade`".into(),
                ))
            }
            _ => return Err(Error::Config(format!("unknown term `{}`", s))),
        };
        term.validate()?;
        Ok(term)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Edges => write!(f, "edges"),
            Term::NodeMatch(a) => write!(f, "nodematch:{}", a),
            Term::Gwesp(d) => write!(f, "gwesp:{}", d),
            Term::Triangle => write!(f, "triangle"),
        }
    }
}

fn parse_term_list(list: &str) -> Result<Vec<Term>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Ordered list of model terms; its length is the parameter dimension p.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    terms: Vec<Term>,
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("model needs at least one term".into()));
        }
        for t in &terms {
            t.validate()?;
        }
        Ok(ModelSpec { terms })
    }

    /// Parse a comma-separated term list such as `edges, gwesp:0.2`.
    pub fn parse(list: &str) -> Result<Self> {
        Self::new(parse_term_list(list)?)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(Term::to_string).collect()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.labels().join(", "))
    }
}

/// Per-coordinate monotone transform applied to summary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    /// u ↦ √(u + 1)
    Sqrt1p,
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "identity" | "" => Ok(Transform::Identity),
            "sqrt1p" => Ok(Transform::Sqrt1p),
            other => Err(Error::Config(format!("unknown transform `{}`", other))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Identity => write!(f, "none"),
            Transform::Sqrt1p => write!(f, "sqrt1p"),
        }
    }
}

/// Summary statistics used by ABC. Independent of the model terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SummarySpec {
    terms: Vec<Term>,
    transforms: Vec<Transform>,
}

impl SummarySpec {
    pub fn new(terms: Vec<Term>, transforms: Vec<Transform>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("summary needs at least one term".into()));
        }
        if transforms.len() != terms.len() {
            return Err(Error::Config(format!(
                "{} transform flags for {} summary terms",
                transforms.len(),
                terms.len()
            )));
        }
        for t in &terms {
            t.validate()?;
        }
        Ok(SummarySpec { terms, transforms })
    }

    pub fn parse(list: &str) -> Result<Self> {
        let terms = parse_term_list(list)?;
        let n = terms.len();
        Self::new(terms, vec![Transform::Identity; n])
    }

    /// The model's own sufficient statistics, untransformed.
    pub fn from_model(model: &ModelSpec) -> Self {
        SummarySpec {
            terms: model.terms.clone(),
            transforms: vec![Transform::Identity; model.dim()],
        }
    }

    pub fn with_transform_all(mut self, t: Transform) -> Self {
        self.transforms.iter_mut().for_each(|x| *x = t);
        self
    }

    pub fn with_transforms(self, transforms: Vec<Transform>) -> Result<Self> {
        Self::new(self.terms, transforms)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms
            .iter()
            .zip(&self.transforms)
            .map(|(t, tr)| match tr {
                Transform::Identity => t.to_string(),
                Transform::Sqrt1p => format!("sqrt1p({})", t),
            })
            .collect()
    }
}

/// Anything that names an ordered list of terms.
pub trait StatSpec {
    fn terms(&self) -> &[Term];
    fn transforms(&self) -> Option<&[Transform]> {
        None
    }
}

impl StatSpec for ModelSpec {
    fn terms(&self) -> &[Term] {
        &self.terms
    }
}

impl StatSpec for SummarySpec {
    fn terms(&self) -> &[Term] {
        &self.terms
    }
    fn transforms(&self) -> Option<&[Transform]> {
        Some(&self.transforms)
    }
}

/// A real statistic vector g(y) or s = S(y).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatVector(pub Vec<f64>);

impl StatVector {
    pub fn zeros(dim: usize) -> Self {
        StatVector(vec![0.0; dim])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StatVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StatVector {
    fn from(v: Vec<f64>) -> Self {
        StatVector(v)
    }
}

#[derive(Debug, Clone)]
enum BoundTerm {
    Edges,
    NodeMatch(Vec<u32>),
    // weights[k] = e^φ (1 − (1 − e^{−φ})^k), weights[0] = 0
    Gwesp(Vec<f64>),
    Triangle,
}

/// Terms resolved against one graph's attributes, ready for the hot loop.
#[derive(Debug, Clone)]
pub struct BoundTerms {
    terms: Vec<BoundTerm>,
    has_local: bool,
}

impl BoundTerms {
    pub fn bind(terms: &[Term], g: &Graph) -> Result<Self> {
        if g.is_directed() {
            return Err(Error::Unsupported(
                "only undirected statistics are implemented; the graph is directed".into(),
            ));
        }
        let n = g.node_count();
        let terms = terms
            .iter()
            .map(|t| {
                t.validate()?;
                Ok(match t {
                    Term::Edges => BoundTerm::Edges,
                    Term::Triangle => BoundTerm::Triangle,
                    Term::NodeMatch(name) => {
                        let col = g.attributes().get(name).ok_or_else(|| {
                            Error::Config(format!(
                                "nodematch references missing attribute `{}`",
                                name
                            ))
                        })?;
                        BoundTerm::NodeMatch(col.codes())
                    }
                    Term::Gwesp(decay) => BoundTerm::Gwesp(gwesp_weights(*decay, n)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let has_local = terms
            .iter()
            .any(|t| matches!(t, BoundTerm::Gwesp(_) | BoundTerm::Triangle));
        Ok(BoundTerms { terms, has_local })
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    /// Full statistic vector by direct census of the graph.
    pub fn stats(&self, g: &Graph) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        for d in g.edges() {
            let sp = if self.has_local {
                g.shared_partner_count(d.i, d.j)
            } else {
                0
            };
            for (o, t) in out.iter_mut().zip(&self.terms) {
                *o += match t {
                    BoundTerm::Edges => 1.0,
                    BoundTerm::NodeMatch(codes) => (codes[d.i] == codes[d.j]) as u8 as f64,
                    BoundTerm::Gwesp(w) => w[sp],
                    BoundTerm::Triangle => sp as f64,
                };
            }
        }
        for (o, t) in out.iter_mut().zip(&self.terms) {
            if matches!(t, BoundTerm::Triangle) {
                // each triangle is counted once per edge
                *o /= 3.0;
            }
        }
        out
    }

    /// g(y⁺) − g(y⁻) for dyad `d`, whatever its current state.
    pub fn change(&self, g: &Graph, d: Dyad, out: &mut [f64]) {
        let (i, j) = (d.i, d.j);
        let present = g.has_edge(i, j) as usize;
        let mut sp_ij = usize::MAX;
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = match t {
                BoundTerm::Edges => 1.0,
                BoundTerm::NodeMatch(codes) => (codes[i] == codes[j]) as u8 as f64,
                BoundTerm::Triangle => {
                    if sp_ij == usize::MAX {
                        sp_ij = g.shared_partner_count(i, j);
                    }
                    sp_ij as f64
                }
                BoundTerm::Gwesp(w) => {
                    if sp_ij == usize::MAX {
                        sp_ij = g.shared_partner_count(i, j);
                    }
                    gwesp_change(g, w, i, j, sp_ij, present)
                }
            };
        }
    }
}

fn gwesp_weights(decay: f64, n: usize) -> Vec<f64> {
    let r = 1.0 - (-decay).exp();
    let scale = decay.exp();
    (0..n.max(1))
        .map(|k| if k == 0 { 0.0 } else { scale * (1.0 - r.powi(k as i32)) })
        .collect()
}

// The new edge (i,j) contributes w[sp(i,j)], and each common neighbor k gains
// one shared partner on the edges (i,k) and (j,k).
fn gwesp_change(g: &Graph, w: &[f64], i: usize, j: usize, sp_ij: usize, present: usize) -> f64 {
    let mut delta = w[sp_ij];
    let (a, b) = if g.degree(i) <= g.degree(j) { (i, j) } else { (j, i) };
    for &k in g.neighbors(a) {
        let k = k as usize;
        if k == b || !g.has_edge(b, k) {
            continue;
        }
        let s_ak = g.shared_partner_count(a, k) - present;
        let s_bk = g.shared_partner_count(b, k) - present;
        delta += w[s_ak + 1] - w[s_ak] + w[s_bk + 1] - w[s_bk];
    }
    delta
}

/// Exact statistic vector of `g`; transforms, if any, are applied last.
pub fn compute_stats<S: StatSpec + ?Sized>(g: &Graph, spec: &S) -> Result<StatVector> {
    let bound = BoundTerms::bind(spec.terms(), g)?;
    let mut values = bound.stats(g);
    if let Some(tr) = spec.transforms() {
        apply_transforms(&mut values, tr)?;
    }
    Ok(StatVector(values))
}

/// Change statistics Δ_d g(y).
pub fn change_stats(g: &Graph, spec: &ModelSpec, d: Dyad) -> Result<StatVector> {
    let bound = BoundTerms::bind(spec.terms(), g)?;
    let mut out = vec![0.0; bound.dim()];
    bound.change(g, g.canonical(d.i, d.j), &mut out);
    Ok(StatVector(out))
}

/// Change statistics by recomputing g on both toggled states.
pub fn change_stats_recompute(g: &Graph, spec: &ModelSpec, d: Dyad) -> Result<StatVector> {
    let mut work = g.clone();
    if !work.has_edge(d.i, d.j) {
        work.toggle(d);
    }
    let plus = compute_stats(&work, spec)?;
    work.toggle(d);
    let minus = compute_stats(&work, spec)?;
    Ok(StatVector(
        plus.iter().zip(minus.iter()).map(|(a, b)| a - b).collect(),
    ))
}

/// θᵀ g(y), the log-density up to the log-partition function.
pub fn log_unnorm_density(theta: &[f64], stats: &[f64]) -> Result<f64> {
    if theta.len() != stats.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: stats.len(),
        });
    }
    Ok(dot(theta, stats))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Apply the summary spec's per-coordinate transforms.
pub fn apply_transform(s: &StatVector, spec: &SummarySpec) -> Result<StatVector> {
    if s.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: s.len(),
        });
    }
    let mut v = s.0.clone();
    apply_transforms(&mut v, spec.transforms())?;
    Ok(StatVector(v))
}

fn apply_transforms(values: &mut [f64], transforms: &[Transform]) -> Result<()> {
    for (k, (v, t)) in values.iter_mut().zip(transforms).enumerate() {
        if let Transform::Sqrt1p = t {
            if *v < -1.0 {
                return Err(Error::Degenerate(format!(
                    "sqrt1p transform undefined for value {} at coordinate {}",
                    v, k
                )));
            }
            *v = (*v + 1.0).sqrt();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeAttributes;
    use crate::graph::AttrColumn;

    fn k3() -> Graph {
        let e = [Dyad::new(0, 1), Dyad::new(1, 2), Dyad::new(0, 2)];
        Graph::from_edge_list(3, false, &e, None).unwrap()
    }

    #[test]
    fn parses_terms() {
        let m = ModelSpec::parse("edges, nodematch:grade, gwesp:0.5, triangle").unwrap();
        assert_eq!(
            m.terms(),
            &[
                Term::Edges,
                Term::NodeMatch("grade".into()),
                Term::Gwesp(0.5),
                Term::Triangle
            ]
        );
        assert_eq!(m.to_string(), "edges, nodematch:grade, gwesp:0.5, triangle");
        assert!(ModelSpec::parse("gwesp:-1").is_err());
        assert!(ModelSpec::parse("kstar:2").is_err());
        assert!(ModelSpec::parse("").is_err());
    }

    #[test]
    fn gwesp_on_triangle_is_three_for_any_decay() {
        for decay in [0.0, 0.2, 0.5, 1.7] {
            let s = compute_stats(&k3(), &ModelSpec::new(vec![Term::Gwesp(decay)]).unwrap())
                .unwrap();
            assert!((s[0] - 3.0).abs() < 1e-12, "decay {}", decay);
        }
    }

    #[test]
    fn nodematch_change() {
        let mut g = Graph::empty(3, false);
        let mut a = NodeAttributes::new(3);
        a.insert("grade", AttrColumn::Numeric(vec![7.0, 7.0, 8.0])).unwrap();
        g.set_attributes(a).unwrap();
        let m = ModelSpec::parse("edges, nodematch:grade").unwrap();
        assert_eq!(change_stats(&g, &m, Dyad::new(0, 1)).unwrap().0, vec![1.0, 1.0]);
        assert_eq!(change_stats(&g, &m, Dyad::new(1, 2)).unwrap().0, vec![1.0, 0.0]);
        let missing = ModelSpec::parse("nodematch:sex").unwrap();
        assert!(matches!(compute_stats(&g, &missing), Err(Error::Config(_))));
    }

    #[test]
    fn directed_graphs_error_cleanly() {
        let g = Graph::empty(3, true);
        let m = ModelSpec::parse("edges").unwrap();
        assert!(matches!(compute_stats(&g, &m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn transform_values() {
        let spec = SummarySpec::parse("edges, triangle")
            .unwrap()
            .with_transforms(vec![Transform::Sqrt1p, Transform::Identity])
            .unwrap();
        let out = apply_transform(&StatVector(vec![3.0, 3.0]), &spec).unwrap();
        assert_eq!(out.0, vec![2.0, 3.0]);
        let out = apply_transform(&StatVector(vec![0.0, 0.0]), &spec).unwrap();
        assert_eq!(out.0[0], 1.0);
        let out = apply_transform(&StatVector(vec![203.0, 0.0]), &spec).unwrap();
        assert!((out.0[0] - 14.282856857085701).abs() < 1e-12);
        assert!(apply_transform(&StatVector(vec![-2.0, 0.0]), &spec).is_err());
    }

    #[test]
    fn log_density_is_dot_product() {
        assert_eq!(log_unnorm_density(&[0.0, 0.0], &[78.0, 5.0]).unwrap(), 0.0);
        assert_eq!(log_unnorm_density(&[1.0, 0.0], &[78.0, 5.0]).unwrap(), 78.0);
        assert!(log_unnorm_density(&[1.0], &[78.0, 5.0]).is_err());
    }

    #[test]
    fn incremental_change_matches_recompute_on_k4_minus_edge() {
        let e = [
            Dyad::new(0, 1),
            Dyad::new(0, 2),
            Dyad::new(0, 3),
            Dyad::new(1, 2),
            Dyad::new(1, 3),
        ];
        let g = Graph::from_edge_list(4, false, &e, None).unwrap();
        let m = ModelSpec::parse("edges, gwesp:0.7, triangle").unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                let d = Dyad::new(i, j);
                let a = change_stats(&g, &m, d).unwrap();
                let b = change_stats_recompute(&g, &m, d).unwrap();
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() < 1e-12, "{} {:?} {:?}", d, a, b);
                }
            }
        }
    }
}
